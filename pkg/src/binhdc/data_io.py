"""Dataset loaders, splits, the encoded-dataset cache and the model file format.

Model file layout (all integers little-endian)::

    magic      8s   b"BHDCMDL\\0"
    version    B
    flags      B    bit 0: latent weights present, bit 1: item memory present
    reserved   H
    dim, n_classes, n_features, n_levels   4 x I
    encoder_seed                           q
    meta_len   I    followed by meta_len bytes of UTF-8 JSON
    class words     n_classes * ceil(dim/64) x Q
    [latent]        dim * n_classes x d (row-major, dim major)
    [item memory]   seed q, position words n_features*W x Q,
                    level words n_levels*W x Q, mins/maxs 2 * n_features x d
    crc32      I    over every preceding byte
"""

import gzip
import hashlib
import io
import json
import os
import struct
import tempfile
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import ClassModel
from .encoder import EncodedDataset, FeatureStats, ItemMemory
from .hv import n_words

MODEL_MAGIC = b"BHDCMDL\0"
MODEL_VERSION = 1
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3072

_HEADER = struct.Struct("<8sBBH4Iq")


class FormatError(ValueError):
    """Malformed input file. ``offset`` (bytes) or ``row``/``col`` locate it."""

    def __init__(self, message, path=None, offset=None, row=None, col=None):
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"offset {offset}")
        if row is not None:
            where.append(f"row {row}")
        if col is not None:
            where.append(f"col {col}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.path = path
        self.offset = offset
        self.row = row
        self.col = col


class SplitWarning(UserWarning):
    pass


@dataclass
class RawDataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: list = field(default=None)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp).reshape(-1)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels differ in length")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if len(self.labels) and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")
        if self.class_names is not None and len(self.labels) and self.labels.max() >= len(self.class_names):
            raise ValueError("labels exceed the number of class names")

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        if self.class_names is not None:
            return len(self.class_names)
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, index):
        return RawDataset(self.features[index], self.labels[index], self.class_names)


# ---------------------------------------------------------------- loaders

def _read_bytes(path):
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _idx_header(buf, path, magic, ndim):
    need = 4 + 4 * ndim
    if len(buf) < need:
        raise FormatError(f"truncated IDX header, need {need} bytes", path, offset=len(buf))
    got = struct.unpack_from(">I", buf, 0)[0]
    if got != magic:
        raise FormatError(f"bad IDX magic 0x{got:08x}, expected 0x{magic:08x}", path, offset=0)
    return struct.unpack_from(f">{ndim}I", buf, 4), need


def load_idx(images_path, labels_path):
    """MNIST-family IDX pair; images flatten row-major to ``rows*cols`` features."""
    img = _read_bytes(images_path)
    lab = _read_bytes(labels_path)
    (count, rows, cols), off = _idx_header(img, images_path, IDX_IMAGES_MAGIC, 3)
    (n_labels,), loff = _idx_header(lab, labels_path, IDX_LABELS_MAGIC, 1)
    if count != n_labels:
        raise FormatError(f"image count {count} != label count {n_labels}", labels_path, offset=4)
    size = count * rows * cols
    if len(img) - off < size:
        raise FormatError(f"truncated image data, expected {size} bytes", images_path, offset=len(img))
    if len(lab) - loff < count:
        raise FormatError(f"truncated label data, expected {count} bytes", labels_path, offset=len(lab))
    x = np.frombuffer(img, dtype=np.uint8, count=size, offset=off).reshape(count, rows * cols)
    y = np.frombuffer(lab, dtype=np.uint8, count=count, offset=loff)
    return RawDataset(x.astype(np.float64), y.astype(np.intp))


def load_cifar(paths):
    """CIFAR-10 binary batches: 1 label byte then 3072 channel bytes per record."""
    feats, labels = [], []
    for path in paths:
        buf = _read_bytes(path)
        if len(buf) % CIFAR_RECORD:
            whole = len(buf) // CIFAR_RECORD * CIFAR_RECORD
            raise FormatError("truncated CIFAR record", path, offset=whole)
        rec = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        if rec.size and rec[:, 0].max() > 9:
            bad = int(np.argmax(rec[:, 0] > 9))
            raise FormatError("label byte outside 0..9", path, offset=bad * CIFAR_RECORD)
        labels.append(rec[:, 0].astype(np.intp))
        feats.append(rec[:, 1:].astype(np.float64))
    if not feats:
        raise ValueError("no CIFAR batch files given")
    return RawDataset(np.concatenate(feats), np.concatenate(labels))


def _split_line(line, delimiter):
    if delimiter is None:
        return line.split()
    return [c.strip() for c in line.rstrip("\r\n").split(delimiter)]


def _label_key(v):
    try:
        f = float(v)
    except ValueError:
        return v
    return str(int(f)) if f.is_integer() else v


def _label_mapping(raw, class_names=None):
    """Integral numeric labels map in ascending order, anything else by first appearance.

    With ``class_names`` the mapping is fixed (e.g. reuse the training set's).
    """
    if class_names is not None:
        index = {_label_key(str(c)): i for i, c in enumerate(class_names)}
        out = []
        for row, v in enumerate(raw, start=1):
            key = _label_key(v)
            if key not in index:
                raise FormatError(f"unknown label {v!r}", row=row)
            out.append(index[key])
        return np.array(out, dtype=np.intp), list(class_names)
    try:
        vals = [float(v) for v in raw]
        if all(v.is_integer() for v in vals):
            uniq = sorted(set(vals))
            index = {v: i for i, v in enumerate(uniq)}
            return np.array([index[v] for v in vals], dtype=np.intp), [str(int(v)) for v in uniq]
    except ValueError:
        pass
    index = {}
    for v in raw:
        index.setdefault(v, len(index))
    return np.array([index[v] for v in raw], dtype=np.intp), list(index)


def load_csv(path, label_column=-1, has_header=False, delimiter=",", class_names=None):
    """Delimited numeric table; ``delimiter=None`` splits on whitespace."""
    path = Path(path)
    text = _read_bytes(path).decode("utf-8")
    rows, raw_labels = [], []
    width = None
    skip_header = has_header
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if skip_header:
            skip_header = False
            continue
        cells = _split_line(line, delimiter)
        if width is None:
            width = len(cells)
            if width < 2:
                raise FormatError("need at least one feature and a label column", path, row=lineno)
        elif len(cells) != width:
            raise FormatError(f"ragged row: {len(cells)} cells, expected {width}", path, row=lineno)
        col = label_column if label_column >= 0 else width + label_column
        if not 0 <= col < width:
            raise FormatError(f"label column {label_column} out of range", path, row=lineno)
        raw_labels.append(cells[col])
        feat = []
        for j, c in enumerate(cells):
            if j == col:
                continue
            try:
                v = float(c)
            except ValueError:
                raise FormatError(f"non-numeric cell {c!r}", path, row=lineno, col=j + 1) from None
            if not np.isfinite(v):
                raise FormatError(f"non-finite cell {c!r}", path, row=lineno, col=j + 1)
            feat.append(v)
        rows.append(feat)
    if not rows:
        raise FormatError("no data rows", path, row=0)
    try:
        labels, names = _label_mapping(raw_labels, class_names)
    except FormatError as exc:
        raise FormatError(str(exc), path, row=exc.row) from None
    return RawDataset(np.array(rows), labels, names)


def load_ucihar(root, subset="train", class_names=None):
    """The UCI HAR distribution: ``<root>/<subset>/X_<subset>.txt`` and ``y_<subset>.txt``."""
    base = Path(root) / subset
    x_path, y_path = base / f"X_{subset}.txt", base / f"y_{subset}.txt"
    x = _load_matrix(x_path)
    y = _load_matrix(y_path).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise FormatError(f"{x.shape[0]} feature rows vs {y.shape[0]} labels", y_path)
    labels, names = _label_mapping([repr(float(v)) for v in y], class_names)
    return RawDataset(x, labels, names)


def _load_matrix(path):
    text = _read_bytes(path).decode("utf-8")
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        cells = line.split()
        if not cells:
            continue
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise FormatError(f"ragged row: {len(cells)} cells, expected {width}", path, row=lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            bad = next(j for j, c in enumerate(cells) if not _is_float(c))
            raise FormatError(f"non-numeric cell {cells[bad]!r}", path, row=lineno, col=bad + 1) from None
    if not rows:
        raise FormatError("no data rows", path, row=0)
    return np.array(rows)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


# ----------------------------------------------------------------- splits

def split_indices(labels, fraction, stratified=True, seed=0):
    """Disjoint ``(rest, held)`` index arrays with ``held`` about ``fraction`` of the rows."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    n = len(labels)
    if stratified:
        classes, counts = np.unique(labels, return_counts=True)
        if np.any(counts < 2):
            warnings.warn(
                f"class {classes[np.argmin(counts)]} has too few samples to stratify; "
                "falling back to a plain random split",
                SplitWarning, stacklevel=2,
            )
            stratified = False
    if not stratified:
        perm = rng.permutation(n)
        n_held = int(round(fraction * n))
        return np.sort(perm[n_held:]), np.sort(perm[:n_held])
    # largest-remainder allocation so the total matches round(fraction * n)
    classes, sizes = np.unique(labels, return_counts=True)
    exact = fraction * sizes
    take = np.floor(exact).astype(int)
    extra = int(round(fraction * n)) - take.sum()
    for j in np.argsort(-(exact - take), kind="stable")[:max(extra, 0)]:
        take[j] += 1
    take = np.clip(take, 1, sizes - 1)
    held = []
    for k, t in zip(classes, take):
        members = rng.permutation(np.flatnonzero(labels == k))
        held.append(members[:t])
    held = np.sort(np.concatenate(held))
    rest = np.setdiff1d(np.arange(n), held, assume_unique=True)
    return rest, held


def split(dataset, fraction, stratified=True, seed=0):
    rest, held = split_indices(dataset.labels, fraction, stratified, seed)
    return dataset.subset(rest), dataset.subset(held)


# ------------------------------------------------------- model file format

def _atomic_write(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model, path, latent=None, item_memory=None):
    meta = dict(model.metadata)
    n_features = item_memory.n_features if item_memory is not None else int(meta.get("n_features", 0))
    n_levels = item_memory.n_levels if item_memory is not None else int(meta.get("n_levels", 0))
    enc_seed = item_memory.seed if item_memory is not None else int(meta.get("encoder_seed", 0))
    flags = (1 if latent is not None else 0) | (2 if item_memory is not None else 0)
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = io.BytesIO()
    out.write(_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, flags, 0, model.dim, model.n_classes,
                           n_features, n_levels, enc_seed))
    out.write(struct.pack("<I", len(meta_bytes)))
    out.write(meta_bytes)
    out.write(model.class_words.astype("<u8").tobytes())
    if latent is not None:
        lat = np.asarray(latent, dtype="<f8")
        if lat.shape != (model.dim, model.n_classes):
            raise ValueError(f"latent must have shape {(model.dim, model.n_classes)}")
        out.write(lat.tobytes())
    if item_memory is not None:
        if item_memory.dim != model.dim:
            raise ValueError("item memory and model disagree on dim")
        out.write(struct.pack("<q", item_memory.seed))
        out.write(item_memory.position_words.astype("<u8").tobytes())
        out.write(item_memory.level_words.astype("<u8").tobytes())
        out.write(item_memory.stats.mins.astype("<f8").tobytes())
        out.write(item_memory.stats.maxs.astype("<f8").tobytes())
    body = out.getvalue()
    _atomic_write(path, body + struct.pack("<I", zlib.crc32(body)))


@dataclass
class LoadedModel:
    model: ClassModel
    latent: np.ndarray = None
    item_memory: ItemMemory = None
    n_features: int = 0
    n_levels: int = 0
    encoder_seed: int = 0


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.path, self.pos = buf, path, 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated model file while reading {what}", self.path, offset=self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def array(self, dtype, count, what):
        dt = np.dtype(dtype)
        raw = self.take(dt.itemsize * count, what)
        return np.frombuffer(raw, dtype=dt).copy()


def load_model(path):
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size + 8:
        raise FormatError("truncated model file", path, offset=len(buf))
    if buf[:8] != MODEL_MAGIC:
        raise FormatError("bad model magic", path, offset=0)
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch (file corrupt or truncated)", path, offset=len(buf) - 4)
    r = _Reader(body, path)
    _, version, flags, _, dim, k, nf, nq, enc_seed = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}, expected {MODEL_VERSION}", path, offset=8)
    (meta_len,) = struct.unpack("<I", r.take(4, "metadata length"))
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad metadata: {exc}", path, offset=r.pos) from None
    w = n_words(dim)
    words = r.array("<u8", k * w, "class words").reshape(k, w).astype(np.uint64)
    latent = None
    if flags & 1:
        latent = r.array("<f8", dim * k, "latent weights").reshape(dim, k).astype(np.float64)
    im = None
    if flags & 2:
        (im_seed,) = struct.unpack("<q", r.take(8, "item memory seed"))
        pos = r.array("<u8", nf * w, "position words").reshape(nf, w).astype(np.uint64)
        lvl = r.array("<u8", nq * w, "level words").reshape(nq, w).astype(np.uint64)
        mins = r.array("<f8", nf, "feature mins")
        maxs = r.array("<f8", nf, "feature maxs")
        im = ItemMemory(dim=dim, n_levels=nq, position_words=pos, level_words=lvl,
                        stats=FeatureStats(mins, maxs), seed=im_seed)
    if r.pos != len(body):
        raise FormatError("trailing bytes after model payload", path, offset=r.pos)
    try:
        model = ClassModel(dim, words, meta)
    except ValueError as exc:
        raise FormatError(str(exc), path, offset=_HEADER.size) from None
    return LoadedModel(model, latent, im, nf, nq, enc_seed)


# ----------------------------------------------------- encoded-data cache

def cache_key(datasets, dim, n_levels, seed):
    """Content hash of the raw data (one dataset or several) and encoder settings."""
    if isinstance(datasets, RawDataset):
        datasets = [datasets]
    h = hashlib.sha256()
    for ds in datasets:
        if ds is None:
            h.update(b"none")
            continue
        h.update(struct.pack("<qq", *ds.features.shape))
        h.update(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(ds.labels, dtype="<i8").tobytes())
    h.update(struct.pack("<qqq", dim, n_levels, seed))
    return h.hexdigest()


def default_cache_dir():
    return Path(os.environ.get("BINHDC_CACHE_DIR", Path.home() / ".cache" / "binhdc"))


def save_encoded(path, key, train, item_memory, test=None, class_names=None):
    """Write an encoded cache (packed words, labels, key, item memory) atomically."""
    arrays = {
        "key": np.array(key),
        "dim": np.array(train.dim),
        "n_classes": np.array(train.n_classes),
        "train_words": train.words,
        "train_labels": train.labels,
        "im_seed": np.array(item_memory.seed),
        "im_levels": np.array(item_memory.n_levels),
        "im_positions": item_memory.position_words,
        "im_level_words": item_memory.level_words,
        "im_mins": item_memory.stats.mins,
        "im_maxs": item_memory.stats.maxs,
    }
    if test is not None:
        arrays["test_words"] = test.words
        arrays["test_labels"] = test.labels
    if class_names is not None:
        arrays["class_names"] = np.array([str(c) for c in class_names])
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    _atomic_write(path, buf.getvalue())


@dataclass
class EncodedCache:
    key: str
    train: EncodedDataset
    item_memory: ItemMemory
    test: EncodedDataset = None
    class_names: list = None


def load_encoded(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            dim = int(z["dim"])
            k = int(z["n_classes"])
            train = EncodedDataset(dim, z["train_words"], z["train_labels"], k)
            test = None
            if "test_words" in z:
                test = EncodedDataset(dim, z["test_words"], z["test_labels"], k)
            im = ItemMemory(
                dim=dim, n_levels=int(z["im_levels"]),
                position_words=z["im_positions"].astype(np.uint64),
                level_words=z["im_level_words"].astype(np.uint64),
                stats=FeatureStats(z["im_mins"], z["im_maxs"]), seed=int(z["im_seed"]),
            )
            names = [str(c) for c in z["class_names"]] if "class_names" in z else None
            return EncodedCache(str(z["key"]), train, im, test, names)
    except (OSError, KeyError, ValueError, zlib.error) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FormatError(f"unreadable encoded cache: {exc}", path) from None


def make_synthetic(n_classes=4, n_features=32, n_per_class=50, noise=0.35, seed=0):
    """Gaussian blobs around random class centres in [0, 1]^N; for smoke runs."""
    rng = np.random.default_rng(seed)
    centres = rng.random((n_classes, n_features))
    labels = np.repeat(np.arange(n_classes), n_per_class)
    feats = centres[labels] + noise * rng.standard_normal((len(labels), n_features))
    order = rng.permutation(len(labels))
    return RawDataset(feats[order], labels[order], [str(k) for k in range(n_classes)])
