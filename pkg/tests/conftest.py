import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from higgs.config import HiggsConfig
from higgs.edgelist import EdgeArrays
from higgs.tree import StreamEdge

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Vertices v1..v7 are ids 1..7 and t_k is timestamp k.  The six edges the
# worked example names are kept verbatim; five fillers occupy the remaining
# slices (t1, t3, t4, t10, t11) so every slice carries one edge.
WORKED_EDGES = [
    StreamEdge(1, 2, 1, 1),
    StreamEdge(4, 5, 1, 2),
    StreamEdge(2, 4, 1, 3),
    StreamEdge(1, 3, 2, 4),
    StreamEdge(4, 6, 3, 5),
    StreamEdge(2, 3, 2, 6),
    StreamEdge(3, 7, 1, 7),
    StreamEdge(4, 7, 2, 8),
    StreamEdge(2, 3, 1, 9),
    StreamEdge(5, 6, 1, 10),
    StreamEdge(6, 7, 1, 11),
]

WORKED_TEXT = "".join(f"{e.src} {e.dst} {e.weight} {e.timestamp}\n" for e in WORKED_EDGES)


def exact_config(**overrides) -> HiggsConfig:
    """Full 32-bit fingerprints: with small streams no two vertices share an identity."""
    params = dict(f1=32)
    params.update(overrides)
    return HiggsConfig(**params)


def random_stream(n: int, vertices: int, span: int, seed: int, max_weight: int = 3) -> EdgeArrays:
    rng = np.random.default_rng(seed)
    src = rng.integers(0, vertices, n).astype(np.uint64)
    dst = rng.integers(0, vertices, n).astype(np.uint64)
    w = rng.integers(1, max_weight + 1, n).astype(np.int64)
    t = np.sort(rng.integers(0, span, n)).astype(np.int64)
    return EdgeArrays(src, dst, w, t)


@pytest.fixture
def worked_edges():
    return list(WORKED_EDGES)


def lifted_arrays(ids, cfg: HiggsConfig, level: int):
    """(fingerprint, address) arrays of many vertices at ``level``."""
    from higgs.hashing import digest_arrays

    fp, base = digest_arrays(np.asarray(ids, dtype=np.uint64), cfg.hash)
    k = (level - 1) * cfg.r_bits
    rest = cfg.f1 - k
    return fp & ((1 << rest) - 1), (base << k) | (fp >> rest)


def matrix_lookups(matrix, src_ids, dst_ids, cfg: HiggsConfig):
    out = np.zeros(len(src_ids), dtype=np.uint64)
    sfp, sbase = lifted_arrays(src_ids, cfg, matrix.level)
    dfp, dbase = lifted_arrays(dst_ids, cfg, matrix.level)
    matrix.edge_weights(sfp, sbase, dfp, dbase, None, out)
    return out


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
