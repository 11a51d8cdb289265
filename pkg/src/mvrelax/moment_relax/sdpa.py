"""Export of a :class:`RelaxationProblem` in SDPA sparse format.

The file describes the SDPA dual form

    min  c.x   s.t.  F(x) = sum_i F_i x_i - F_0  is PSD,

with ``x`` the moment vector (solver coordinates).  Block layout:

* block 1 is diagonal (negative size in the header) of order 2p and holds the
  p equality rows twice, as  A x - b >= 0  and  b - A x >= 0;
* blocks 2.. are the moment and localizing matrices in ``rp.blocks`` order.

Maximization problems are written with the objective negated.  Only upper
triangles are written (1-based indices), one entry per line:
``matno blkno i j value``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .assembly import RelaxationProblem


def _entries(rp: RelaxationProblem):
    """Yield (matno, blkno, i, j, value) with 1-based indices; matno 0 is F_0."""
    A = rp.A.tocsc()
    b = rp.b
    p = len(b)
    for r in range(p):
        if b[r] != 0.0:
            yield 0, 1, r + 1, r + 1, b[r]
            yield 0, 1, p + r + 1, p + r + 1, -b[r]
    for col in range(A.shape[1]):
        lo, hi = A.indptr[col], A.indptr[col + 1]
        for r, v in zip(A.indices[lo:hi], A.data[lo:hi]):
            yield col + 1, 1, r + 1, r + 1, v
            yield col + 1, 1, p + r + 1, p + r + 1, -v
    for k, blk in enumerate(rp.blocks):
        n = blk.size
        rows, cols = np.triu_indices(n)
        scale = np.where(rows == cols, 1.0, 1.0 / np.sqrt(2.0))
        op = sp.coo_matrix(blk.op)
        for r, col, v in sorted(zip(op.row, op.col, op.data), key=lambda e: (e[1], e[0])):
            yield col + 1, k + 2, rows[r] + 1, cols[r] + 1, v * scale[r]


def write_sdpa(rp: RelaxationProblem, path: str | Path) -> Path:
    path = Path(path)
    sign = 1.0 if rp.sense == "min" else -1.0
    sizes = [-2 * len(rp.b)] + [blk.size for blk in rp.blocks]
    lines = [
        f'"mvrelax moment relaxation d={rp.d} sense={rp.sense} digest={rp.digest()}',
        str(rp.layout.size),
        str(len(sizes)),
        " ".join(str(s) for s in sizes),
        " ".join(f"{v:.17g}" for v in sign * rp.objective),
    ]
    for mat, blk, i, j, v in _entries(rp):
        if v != 0.0:
            lines.append(f"{mat} {blk} {i} {j} {v:.17g}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_sdpa(path: str | Path):
    """Parse an SDPA sparse file into (c, block_sizes, F) with F[mat][blk] dense."""
    raw = [ln.strip() for ln in Path(path).read_text().splitlines()]
    body = [ln for ln in raw if ln and ln[0] not in '"*']
    m = int(body[0].split()[0])
    nblocks = int(body[1].split()[0])
    sizes = [int(s) for s in body[2].replace(",", " ").replace("{", " ").replace("}", " ").split()]
    if len(sizes) != nblocks:
        raise ValueError("block count does not match the block structure line")
    c = np.array([float(v) for v in body[3].replace(",", " ").split()])
    F = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    for ln in body[4:]:
        mat, blk, i, j, v = ln.split()
        M = F[int(mat)][int(blk) - 1]
        i, j = int(i) - 1, int(j) - 1
        M[i, j] = M[j, i] = float(v)
    return c, sizes, F
