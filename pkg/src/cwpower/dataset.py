"""Burst corpus generation, splitting, and self-describing binary containers.

One container framing serves three artifact kinds: corpora, model
checkpoints, and single bursts. Payload blocks are length-prefixed and end
with a CRC-32, so truncation and bit rot surface as distinct errors instead
of garbage data.
"""

from __future__ import annotations

import hashlib
import math
import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

from . import autograd as ag
from .models import ModelSpec, ModelWeights
from .signals import (
    Burst,
    BurstLabel,
    PowerGrid,
    RfConfig,
    frequency_shift,
    mix,
    synthesize_cw,
    synthesize_noise,
    synthesize_qpsk,
    tx_to_rx_dbm,
)

MAGIC = b"CWPL"
FORMAT_VERSION = 1
KIND_CORPUS = 1
KIND_CHECKPOINT = 2
KIND_BURST = 3

SPLIT_CODES = {None: 0, "train": 1, "val": 2, "test": 3}
SPLIT_NAMES = {v: k for k, v in SPLIT_CODES.items()}


class ContainerFormatError(Exception):
    """Malformed container file (bad magic, kind, or structure)."""


class VersionMismatchError(ContainerFormatError):
    """File written by an incompatible format version."""


class ChecksumError(ContainerFormatError):
    """A CRC-32 block check failed."""


class TruncatedFileError(ContainerFormatError):
    """File ends before the declared payload."""


@dataclass
class CorpusRecord:
    raw: Burst
    dc: Burst
    label: BurstLabel
    split: str | None = None


@dataclass
class Corpus:
    rf_config: RfConfig
    records: list
    master_seed: int

    def by_split(self, split: str) -> list:
        return [r for r in self.records if r.split == split]

    def cells(self) -> list:
        seen: dict = {}
        for record in self.records:
            seen.setdefault(record.label.cell, []).append(record)
        return list(seen.items())


def child_seed(master_seed: int, cell_index: int, record_index: int) -> int:
    """Splittable per-record seed: 64-bit blake2b of the index triple.

    Order-independent, so corpus generation parallelizes across records.
    """
    payload = struct.pack("<qqq", master_seed, cell_index, record_index)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def synthesize_record(cfg: RfConfig, cw_tx_dbm: float, qpsk_tx_dbm: float, seed: int) -> CorpusRecord:
    """One calibrated mixture burst in both representations, with its label."""
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    qpsk_seed = int(rng.integers(0, 2**63))
    noise_seed = int(rng.integers(0, 2**63))

    cw_rx = tx_to_rx_dbm(cw_tx_dbm, cfg.cw_path_loss_db)
    qpsk_rx = tx_to_rx_dbm(qpsk_tx_dbm, cfg.qpsk_path_loss_db)
    amplitude = 10.0 ** (cw_rx / 20.0)

    cw = synthesize_cw(amplitude, cfg.f_cw_offset_hz, phase, cfg.burst_len, cfg.sample_rate_hz)
    qpsk = synthesize_qpsk(qpsk_rx, cfg, qpsk_seed)
    noise = synthesize_noise(cfg.noise_floor_dbm, cfg.burst_len, noise_seed, cfg.sample_rate_hz)
    raw = mix([cw, qpsk, noise])
    dc = frequency_shift(raw, -cfg.f_cw_offset_hz)

    label = BurstLabel(
        gain=amplitude * complex(math.cos(phase), math.sin(phase)),
        cw_rx_dbm=cw_rx,
        qpsk_rx_dbm=qpsk_rx,
        sir_db=cw_rx - qpsk_rx,
        cw_tx_dbm=cw_tx_dbm,
        qpsk_tx_dbm=qpsk_tx_dbm,
        seed=seed,
    )
    return CorpusRecord(raw=raw, dc=dc, label=label)


def clean_tone_burst(cfg: RfConfig, label: BurstLabel, dc: bool = True) -> Burst:
    """Regenerate the noise-free, interference-free tone for a record's label.

    Used to cross-check the analytic label against the gain oracle.
    """
    rng = np.random.default_rng(label.seed)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    amplitude = 10.0 ** (label.cw_rx_dbm / 20.0)
    raw = synthesize_cw(amplitude, cfg.f_cw_offset_hz, phase, cfg.burst_len, cfg.sample_rate_hz)
    return frequency_shift(raw, -cfg.f_cw_offset_hz) if dc else raw


def generate_corpus(cfg: RfConfig, grid: PowerGrid, per_cell: int, master_seed: int) -> Corpus:
    """Balanced mixture corpus over the power grid; pure in (cfg, grid, seed)."""
    if per_cell < 1:
        raise ValueError("per_cell must be >= 1")
    records = []
    for cell_index, (cw_tx, qpsk_tx) in enumerate(grid.cells()):
        for record_index in range(per_cell):
            seed = child_seed(master_seed, cell_index, record_index)
            records.append(synthesize_record(cfg, cw_tx, qpsk_tx, seed))
    return Corpus(rf_config=cfg, records=records, master_seed=master_seed)


def split_corpus(
    corpus: Corpus,
    val_fraction: float = 0.15,
    test_per_cell: int = 30,
    seed: int = 0,
) -> Corpus:
    """Stratified assignment: exactly ``test_per_cell`` test records per cell,
    the remainder split train/val with the validation count floored."""
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    assigned = []
    for _, cell_records in corpus.cells():
        n = len(cell_records)
        if n <= test_per_cell:
            raise ValueError(f"need more than {test_per_cell} records per cell, got {n}")
        order = rng.permutation(n)
        n_val = int(val_fraction * (n - test_per_cell))
        splits = [None] * n
        for rank, idx in enumerate(order):
            if rank < test_per_cell:
                splits[idx] = "test"
            elif rank < test_per_cell + n_val:
                splits[idx] = "val"
            else:
                splits[idx] = "train"
        assigned.extend(
            replace(record, split=split) for record, split in zip(cell_records, splits)
        )
    return Corpus(rf_config=corpus.rf_config, records=assigned, master_seed=corpus.master_seed)


# --- container framing -----------------------------------------------------

_RF_FIELDS = (
    "f_c_hz",
    "f_cw_offset_hz",
    "qpsk_bandwidth_hz",
    "sample_rate_hz",
    "cw_path_loss_db",
    "qpsk_path_loss_db",
    "noise_floor_dbm",
    "qpsk_symbol_rate_baud",
    "rrc_rolloff",
)
_RF_STRUCT = "<9d2I"
_LABEL_STRUCT = "<7dQB"


class _Writer:
    def __init__(self, kind: int):
        self.chunks = [MAGIC, struct.pack("<HH", FORMAT_VERSION, kind)]

    def block(self, payload: bytes) -> None:
        self.chunks.append(struct.pack("<I", len(payload)))
        self.chunks.append(payload)
        self.chunks.append(struct.pack("<I", zlib.crc32(payload)))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(b"".join(self.chunks))


class _Reader:
    def __init__(self, path, kind: int):
        with open(path, "rb") as fh:
            self.data = fh.read()
        self.pos = 0
        if self._raw(4) != MAGIC:
            raise ContainerFormatError("bad magic bytes")
        version, file_kind = struct.unpack("<HH", self._raw(4))
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"format version {version}, expected {FORMAT_VERSION}")
        if file_kind != kind:
            raise ContainerFormatError(f"container kind {file_kind}, expected {kind}")

    def _raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError("file ends inside a declared block")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def block(self) -> bytes:
        (length,) = struct.unpack("<I", self._raw(4))
        payload = self._raw(length)
        (expected,) = struct.unpack("<I", self._raw(4))
        if zlib.crc32(payload) != expected:
            raise ChecksumError("block CRC-32 mismatch")
        return payload


def _unpack_exact(fmt: str, payload: bytes):
    if len(payload) != struct.calcsize(fmt):
        raise ContainerFormatError("block size does not match its declared layout")
    return struct.unpack(fmt, payload)


def save_corpus(corpus: Corpus, path) -> None:
    writer = _Writer(KIND_CORPUS)
    cfg = corpus.rf_config
    header = struct.pack(
        _RF_STRUCT,
        *[getattr(cfg, f) for f in _RF_FIELDS],
        cfg.burst_len,
        cfg.rrc_span_symbols,
    )
    header += struct.pack("<qI", corpus.master_seed, len(corpus.records))
    writer.block(header)
    for record in corpus.records:
        label = record.label
        payload = struct.pack(
            _LABEL_STRUCT,
            label.gain.real,
            label.gain.imag,
            label.cw_rx_dbm,
            label.qpsk_rx_dbm,
            label.sir_db,
            label.cw_tx_dbm,
            label.qpsk_tx_dbm,
            label.seed,
            SPLIT_CODES[record.split],
        )
        payload += record.raw.samples.astype(np.complex128).tobytes()
        payload += record.dc.samples.astype(np.complex128).tobytes()
        writer.block(payload)
    writer.save(path)


def load_corpus(path) -> Corpus:
    reader = _Reader(path, KIND_CORPUS)
    header = reader.block()
    rf_size = struct.calcsize(_RF_STRUCT)
    *values, burst_len, span = _unpack_exact(_RF_STRUCT, header[:rf_size])
    cfg = RfConfig(burst_len=burst_len, rrc_span_symbols=span, **dict(zip(_RF_FIELDS, values)))
    master_seed, count = _unpack_exact("<qI", header[rf_size:])
    label_size = struct.calcsize(_LABEL_STRUCT)
    burst_bytes = cfg.burst_len * 16
    records = []
    for _ in range(count):
        payload = reader.block()
        if len(payload) != label_size + 2 * burst_bytes:
            raise ContainerFormatError("record block size inconsistent with burst length")
        (g_re, g_im, cw_rx, qpsk_rx, sir, cw_tx, qpsk_tx, seed, split_code) = struct.unpack(
            _LABEL_STRUCT, payload[:label_size]
        )
        raw = np.frombuffer(payload, dtype=np.complex128, count=cfg.burst_len, offset=label_size)
        dc = np.frombuffer(
            payload, dtype=np.complex128, count=cfg.burst_len, offset=label_size + burst_bytes
        )
        label = BurstLabel(
            gain=complex(g_re, g_im),
            cw_rx_dbm=cw_rx,
            qpsk_rx_dbm=qpsk_rx,
            sir_db=sir,
            cw_tx_dbm=cw_tx,
            qpsk_tx_dbm=qpsk_tx,
            seed=seed,
        )
        records.append(
            CorpusRecord(
                raw=Burst(raw.copy(), cfg.sample_rate_hz),
                dc=Burst(dc.copy(), cfg.sample_rate_hz),
                label=label,
                split=SPLIT_NAMES[split_code],
            )
        )
    return Corpus(rf_config=cfg, records=records, master_seed=master_seed)


def save_burst(burst: Burst, path) -> None:
    """Single raw-representation burst; the `estimate` CLI input format."""
    writer = _Writer(KIND_BURST)
    payload = struct.pack("<dI", burst.sample_rate_hz, burst.length)
    payload += burst.samples.astype(np.complex128).tobytes()
    writer.block(payload)
    writer.save(path)


def load_burst(path) -> Burst:
    reader = _Reader(path, KIND_BURST)
    payload = reader.block()
    head = struct.calcsize("<dI")
    fs, n = struct.unpack("<dI", payload[:head])
    if len(payload) != head + n * 16:
        raise ContainerFormatError("burst block size inconsistent with sample count")
    samples = np.frombuffer(payload, dtype=np.complex128, count=n, offset=head)
    return Burst(samples.copy(), fs)


_VARIANT_CODES = {"dc_cnn": 1, "sine_cnn": 2}
_VARIANT_NAMES = {v: k for k, v in _VARIANT_CODES.items()}
_SPEC_STRUCT = "<B10I2q2d"


def save_checkpoint(weights: ModelWeights, path) -> None:
    """Model parameters as named 32-bit float blocks plus a spec header."""
    writer = _Writer(KIND_CHECKPOINT)
    spec = weights.spec
    header = struct.pack(
        _SPEC_STRUCT,
        _VARIANT_CODES[spec.variant],
        *spec.conv_channels,
        *spec.kernels,
        spec.embedding_dim,
        spec.mlp_hidden,
        spec.output_dim,
        spec.input_channels,
        weights.init_seed,
        weights.train_seed,
        spec.probe_offset_hz,
        spec.input_scale,
    )
    header += struct.pack(
        "<4I", weights.epoch, len(weights.params), len(weights.train_loss), len(weights.val_loss)
    )
    header += np.asarray(weights.train_loss, dtype=np.float64).tobytes()
    header += np.asarray(weights.val_loss, dtype=np.float64).tobytes()
    writer.block(header)
    for name, tensor in weights.params.items():
        encoded = name.encode()
        values = np.ascontiguousarray(tensor.values, dtype=np.float32)
        payload = struct.pack("<H", len(encoded)) + encoded
        payload += struct.pack("<B", values.ndim)
        payload += struct.pack(f"<{values.ndim}I", *values.shape)
        payload += values.tobytes()
        writer.block(payload)
    writer.save(path)


def load_checkpoint(path) -> ModelWeights:
    reader = _Reader(path, KIND_CHECKPOINT)
    header = reader.block()
    spec_size = struct.calcsize(_SPEC_STRUCT)
    counts_size = struct.calcsize("<4I")
    (
        variant_code,
        c1,
        c2,
        c3,
        k1,
        k2,
        k3,
        emb,
        hidden,
        out_dim,
        in_ch,
        init_seed,
        train_seed,
        offset,
        scale,
    ) = struct.unpack(_SPEC_STRUCT, header[:spec_size])
    epoch, n_params, n_train, n_val = struct.unpack(
        "<4I", header[spec_size : spec_size + counts_size]
    )
    if len(header) != spec_size + counts_size + 8 * (n_train + n_val):
        raise ContainerFormatError("checkpoint header size inconsistent")
    train_loss = np.frombuffer(
        header, dtype=np.float64, count=n_train, offset=spec_size + counts_size
    ).tolist()
    val_loss = np.frombuffer(
        header, dtype=np.float64, count=n_val, offset=spec_size + counts_size + 8 * n_train
    ).tolist()
    if variant_code not in _VARIANT_NAMES:
        raise ContainerFormatError(f"unknown model variant code {variant_code}")
    spec = ModelSpec(
        variant=_VARIANT_NAMES[variant_code],
        conv_channels=(c1, c2, c3),
        kernels=(k1, k2, k3),
        embedding_dim=emb,
        mlp_hidden=hidden,
        output_dim=out_dim,
        input_channels=in_ch,
        probe_offset_hz=offset,
        input_scale=scale,
    )
    params: dict = {}
    for _ in range(n_params):
        payload = reader.block()
        (name_len,) = struct.unpack("<H", payload[:2])
        name = payload[2 : 2 + name_len].decode()
        ndim = payload[2 + name_len]
        shape = struct.unpack(f"<{ndim}I", payload[3 + name_len : 3 + name_len + 4 * ndim])
        head = 3 + name_len + 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        if len(payload) != head + 4 * size:
            raise ContainerFormatError("tensor block size inconsistent with its shape")
        values = np.frombuffer(payload, dtype=np.float32, count=size, offset=head).reshape(shape)
        params[name] = ag.Tensor(values.copy(), requires_grad=True)
    return ModelWeights(
        spec=spec,
        params=params,
        init_seed=init_seed,
        epoch=epoch,
        train_seed=train_seed,
        train_loss=train_loss,
        val_loss=val_loss,
    )
