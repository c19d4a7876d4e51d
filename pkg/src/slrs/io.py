"""File formats and configuration parsing.

Formats (all indices in files are 1-based):

* ``X.csv`` / ``Y.csv`` -- headered CSV with full-precision (%.17g) floats.
* ``Z.bin`` -- binary tensor: magic bytes ``ZTEN1``, little-endian header of
  n, p, q as unsigned 64-bit integers, then n*p*q row-major float64 values.
  ``Z.csv`` (one row per sample, p*q columns, with a ``# p q`` comment
  header) is the small-case fallback.
* ``blocks.csv`` -- columns block_id,start,end; start/end 1-based inclusive.
* config files -- flat ``key = value`` lines (a TOML-compatible subset):
  ints, floats, booleans, quoted strings, and [a, b, ...] lists.

All outputs are written atomically (temp file in the same directory, then
rename).  Every command writes a run manifest alongside its outputs with
the resolved configuration and seeds needed to byte-reproduce them.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import Dataset, GroundTruth
from .exceptions import ParseError, ValidationError
from .screening import BlockPartition, ScreenResult
from .simulate import LdConfig, ScenarioConfig

ZTEN_MAGIC = b"ZTEN1"

FLOAT_FMT = "%.17g"


def _atomic_write(path, writer, mode="w"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as handle:
            writer(handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def save_matrix_csv(path, A, prefix: str = "x"):
    """Headered CSV of a 2D array at full precision."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError("expected a 2D array")

    def writer(handle):
        handle.write(",".join(f"{prefix}{j + 1}" for j in range(A.shape[1])) + "\n")
        for row in A:
            handle.write(",".join(_fmt(v) for v in row) + "\n")

    _atomic_write(path, writer)


def load_matrix_csv(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def save_vector_csv(path, y, name: str = "y"):
    y = np.asarray(y, dtype=np.float64).ravel()

    def writer(handle):
        handle.write(name + "\n")
        for v in y:
            handle.write(_fmt(v) + "\n")

    _atomic_write(path, writer)


def load_vector_csv(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=1)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def save_tensor_bin(path, Z):
    """ZTEN1 binary tensor: magic, u64 (n, p, q) little-endian, float64 data."""
    Z = np.ascontiguousarray(np.asarray(Z, dtype=np.float64))
    if Z.ndim != 3:
        raise ValidationError("expected an (n, p, q) tensor")

    def writer(handle):
        handle.write(ZTEN_MAGIC)
        handle.write(struct.pack("<QQQ", *Z.shape))
        handle.write(Z.astype("<f8", copy=False).tobytes())

    _atomic_write(path, writer, mode="wb")


def load_tensor_bin(path) -> np.ndarray:
    with open(path, "rb") as handle:
        magic = handle.read(len(ZTEN_MAGIC))
        if magic != ZTEN_MAGIC:
            raise ParseError(f"{path}: bad magic bytes {magic!r}")
        header = handle.read(24)
        if len(header) != 24:
            raise ParseError(f"{path}: truncated header")
        n, p, q = struct.unpack("<QQQ", header)
        data = np.frombuffer(handle.read(), dtype="<f8")
    if data.size != n * p * q:
        raise ParseError(f"{path}: expected {n * p * q} values, found {data.size}")
    return data.reshape(n, p, q).copy()


def save_tensor_csv(path, Z):
    """CSV fallback: one row per sample, p*q columns, shape comment first."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 3:
        raise ValidationError("expected an (n, p, q) tensor")
    n, p, q = Z.shape

    def writer(handle):
        handle.write(f"# p={p} q={q}\n")
        handle.write(",".join(f"z{j + 1}" for j in range(p * q)) + "\n")
        for row in Z.reshape(n, p * q):
            handle.write(",".join(_fmt(v) for v in row) + "\n")

    _atomic_write(path, writer)


def load_tensor_csv(path) -> np.ndarray:
    with open(path) as handle:
        first = handle.readline().strip()
    if not first.startswith("#"):
        raise ParseError(f"{path}: missing shape comment", line=1)
    try:
        fields = dict(part.split("=") for part in first[1:].split())
        p, q = int(fields["p"]), int(fields["q"])
    except (ValueError, KeyError) as exc:
        raise ParseError(f"{path}: bad shape comment {first!r}", line=1) from exc
    flat = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if flat.shape[1] != p * q:
        raise ParseError(f"{path}: expected {p * q} columns, found {flat.shape[1]}")
    return flat.reshape(flat.shape[0], p, q)


def load_tensor(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".csv":
        return load_tensor_csv(path)
    return load_tensor_bin(path)


def save_blocks_csv(path, partition: BlockPartition):
    """Contiguous blocks as block_id,start,end rows (1-based inclusive)."""

    def writer(handle):
        handle.write("block_id,start,end\n")
        for j, block in enumerate(partition.blocks):
            lo, hi = int(block.min()), int(block.max())
            if hi - lo + 1 != block.size:
                raise ValidationError("blocks file format requires contiguous blocks")
            handle.write(f"{j + 1},{lo + 1},{hi + 1}\n")

    _atomic_write(path, writer)


def load_blocks_csv(path) -> BlockPartition:
    blocks = []
    with open(path) as handle:
        header = handle.readline().strip()
        if header != "block_id,start,end":
            raise ParseError(f"{path}: bad header {header!r}", line=1)
        for lineno, line in enumerate(handle, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ParseError(f"{path}: expected 3 fields", line=lineno)
            try:
                start, end = int(parts[1]), int(parts[2])
            except ValueError as exc:
                raise ParseError(f"{path}: non-integer bounds", line=lineno) from exc
            if end < start or start < 1:
                raise ParseError(f"{path}: bad range {start}..{end}", line=lineno)
            blocks.append(np.arange(start - 1, end))
    return BlockPartition(tuple(blocks))


def save_dataset(directory, data: Dataset, tensor_format: str = "bin"):
    """Write X.csv, Y.csv and Z.bin (or Z.csv) into a directory."""
    directory = Path(directory)
    save_matrix_csv(directory / "X.csv", data.X)
    save_vector_csv(directory / "Y.csv", data.Y)
    if tensor_format == "bin":
        save_tensor_bin(directory / "Z.bin", data.Z)
    elif tensor_format == "csv":
        save_tensor_csv(directory / "Z.csv", data.Z)
    else:
        raise ValidationError(f"unknown tensor format {tensor_format!r}")


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    X = load_matrix_csv(directory / "X.csv")
    Y = load_vector_csv(directory / "Y.csv")
    zbin = directory / "Z.bin"
    Z = load_tensor_bin(zbin) if zbin.exists() else load_tensor_csv(directory / "Z.csv")
    return Dataset(X, Z, Y)


def save_truth(path, truth: GroundTruth):
    """Ground-truth manifest: JSON of nonzero coefficients and index sets.

    Indices are written 1-based; exposure images are stored as the shared
    base image times a per-covariate multiplier when that factorization is
    exact, otherwise per-covariate dense lists.
    """
    s = truth.beta_star.shape[0]
    nz_beta = {str(l + 1): float(truth.beta_star[l]) for l in np.flatnonzero(truth.beta_star)}
    images = {str(l + 1): np.asarray(img).tolist() for l, img in truth.exposure_images.items()}
    payload = {
        "s": s,
        "beta_nonzero": nz_beta,
        "B": np.asarray(truth.B).tolist(),
        "exposure_images": images,
        "confounders": (truth.confounders + 1).tolist(),
        "precision": (truth.precision + 1).tolist(),
        "instruments": (truth.instruments + 1).tolist(),
        "sigma": truth.sigma,
        "sigma_e": truth.sigma_e,
        "rho1": truth.rho1,
        "rho2": truth.rho2,
    }
    _atomic_write(path, lambda h: json.dump(payload, h, indent=1))


def load_truth(path) -> GroundTruth:
    with open(path) as handle:
        payload = json.load(handle)
    s = payload["s"]
    beta = np.zeros(s)
    for key, value in payload["beta_nonzero"].items():
        beta[int(key) - 1] = value
    images = {int(k) - 1: np.asarray(v, dtype=np.float64)
              for k, v in payload["exposure_images"].items()}
    conf = np.asarray(payload["confounders"], dtype=np.intp) - 1
    prec = np.asarray(payload["precision"], dtype=np.intp) - 1
    instr = np.asarray(payload["instruments"], dtype=np.intp) - 1
    known = np.concatenate([conf, prec, instr])
    irrelevant = np.setdiff1d(np.arange(s), known)
    return GroundTruth(
        beta_star=beta,
        exposure_images=images,
        B=np.asarray(payload["B"], dtype=np.float64),
        confounders=conf,
        precision=prec,
        instruments=instr,
        irrelevant=irrelevant,
        sigma=payload["sigma"],
        sigma_e=payload["sigma_e"],
        rho1=payload["rho1"],
        rho2=payload["rho2"],
    )


def save_scores_csv(path, result: ScreenResult):
    """Per-covariate score table (Manhattan-style plot data)."""
    sc = result.scores
    have_blocks = sc.block_outcome_scores is not None

    def writer(handle):
        cols = ["index", "outcome_score", "exposure_score"]
        if have_blocks:
            cols += ["block_outcome_score", "block_exposure_score"]
        cols.append("selected")
        handle.write(",".join(cols) + "\n")
        selected = np.zeros(sc.s, dtype=bool)
        selected[result.selected] = True
        for l in range(sc.s):
            row = [str(l + 1), _fmt(sc.outcome_scores[l]), _fmt(sc.exposure_scores[l])]
            if have_blocks:
                row += [_fmt(sc.block_outcome_scores[l]), _fmt(sc.block_exposure_scores[l])]
            row.append(str(int(selected[l])))
            handle.write(",".join(row) + "\n")

    _atomic_write(path, writer)


def save_selected_csv(path, result: ScreenResult):
    def writer(handle):
        handle.write("index\n")
        for l in result.selected:
            handle.write(f"{l + 1}\n")

    _atomic_write(path, writer)


def load_selected_csv(path) -> np.ndarray:
    try:
        idx = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=1, dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if idx.size and idx.min() < 1:
        raise ParseError(f"{path}: indices must be 1-based positive")
    return (idx - 1).astype(np.intp)


def save_beta_csv(path, beta, indices):
    """Sparse coefficient triplets: 1-based index, value (nonzeros only)."""

    def writer(handle):
        handle.write("index,value\n")
        for l, v in zip(indices, beta):
            if v != 0.0:
                handle.write(f"{l + 1},{_fmt(v)}\n")

    _atomic_write(path, writer)


def save_trace_csv(path, trace):
    def writer(handle):
        handle.write("iteration,objective\n")
        for t, value in enumerate(trace):
            handle.write(f"{t},{_fmt(value)}\n")

    _atomic_write(path, writer)


def save_cv_csv(path, table):
    def writer(handle):
        handle.write("lambda1,lambda2,mean_error,se_error,chosen\n")
        for j, (l1, l2) in enumerate(table.grid):
            handle.write(
                f"{_fmt(l1)},{_fmt(l2)},{_fmt(table.mean_error[j])},"
                f"{_fmt(table.se_error[j])},{int(j == table.chosen)}\n"
            )

    _atomic_write(path, writer)


def save_report_csv(path, report):
    """Study report: one row per (method, metric) with mean and SE."""

    def writer(handle):
        handle.write("method,metric,mean,se,replicates\n")
        for name in sorted(report.summary):
            rows = report.rows[name]
            for metric, (mean, se) in report.summary[name].items():
                handle.write(f"{name},{metric},{_fmt(mean)},{_fmt(se)},{len(rows)}\n")

    _atomic_write(path, writer)


def save_curves_csv(path, curves_by_method):
    """Coverage curves: method, size, variable (1-based or 'overall'), value."""

    def writer(handle):
        handle.write("method,size,variable,coverage\n")
        for name in sorted(curves_by_method):
            curves = curves_by_method[name]
            for i, size in enumerate(curves.sizes):
                handle.write(f"{name},{_fmt(size)},overall,{_fmt(curves.overall[i])}\n")
            for var in sorted(curves.per_variable):
                values = curves.per_variable[var]
                for i, size in enumerate(curves.sizes):
                    handle.write(f"{name},{_fmt(size)},{var + 1},{_fmt(values[i])}\n")

    _atomic_write(path, writer)


def save_manifest(path, payload: dict):
    body = {"tool": "slrs", "version": __version__, "written_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    body.update(payload)
    _atomic_write(path, lambda h: json.dump(body, h, indent=1, sort_keys=True))


def _parse_scalar(text: str, path, lineno: int):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part, path, lineno) for part in inner.split(",")]
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{path}: cannot parse value {text!r}", line=lineno) from None


def parse_config(path) -> dict:
    """Flat key = value configuration (TOML-compatible subset)."""
    values: dict = {}
    with open(path) as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}: expected key = value", line=lineno,
                                 column=len(raw) - len(raw.lstrip()) + 1)
            key, _, value = line.partition("=")
            key = key.strip()
            if not key:
                raise ParseError(f"{path}: empty key", line=lineno)
            values[key] = _parse_scalar(value, path, lineno)
    return values


CONFIG_SCHEMA = """\
# Scenario configuration schema (key = value; '#' starts a comment)
n = 200                 # sample size (required)
s = 5000                # covariate dimension
p = 64                  # exposure rows
q = 64                  # exposure columns
rho1 = 0.5              # design AR(1) decay
rho2 = 0.5              # exposure error correlation decay
sigma = 1.0             # outcome noise sd
sigma_e = 0.2           # exposure noise sd
instrument_triples = 1  # copies of the (-3,-1,-1/3) instrument triple
seed = 0
# Optional equicorrelated-block (LD) design:
# ld_block_sizes = [2, 4, 6, 12, 24, 52]  # replicated ld_block_replication times
# ld_block_replication = 50
# ld_within_corr = 0.4
# ld_maf_range = [0.05, 0.5]
# ld_K = 0               # planted weak precision block size (0 = none)
# Study keys (cmd: study):
# methods = ["joint:proposed", "joint:oracle"]
# replicates = 20
# base_seed = 0
# target = 0             # 0 = per-method default floor(n/log n) (doubled for blockwise)
# ratio = 1.0            # |M2| / |M1*|
# grid_n1 = 10
# grid_n2 = 10
# folds = 5
# max_iter = 5000
# rel_tol = 1e-6
# coverage_sizes_max = 0 # emit coverage curves for sizes 1..this (0 = none)
# Permutation-test keys (cmd: permtest):
# n_perm = 1000
"""


def scenario_from_config(values: dict) -> ScenarioConfig:
    if "n" not in values:
        raise ValidationError("config must set n")
    ld = None
    if "ld_block_sizes" in values:
        sizes = tuple(int(b) for b in values["ld_block_sizes"])
        replication = int(values.get("ld_block_replication", 1))
        ld = LdConfig(
            block_sizes=sizes * replication,
            within_corr=float(values.get("ld_within_corr", 0.4)),
            maf_range=tuple(values.get("ld_maf_range", (0.05, 0.5))),
            K=int(values.get("ld_K", 0)),
        )
    return ScenarioConfig(
        n=int(values["n"]),
        s=int(values.get("s", 5000)),
        p=int(values.get("p", 64)),
        q=int(values.get("q", 64)),
        rho1=float(values.get("rho1", 0.5)),
        rho2=float(values.get("rho2", 0.5)),
        sigma=float(values.get("sigma", 1.0)),
        sigma_e=float(values.get("sigma_e", 0.2)),
        instrument_triples=int(values.get("instrument_triples", 1)),
        ld=ld,
        seed=int(values.get("seed", 0)),
    )
