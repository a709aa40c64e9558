"""LDPC codes: alist I/O, GF(2) systematic encoding, puncturing and interleaving."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


class AlistFormatError(ValueError):
    pass


def gf2_row_reduce(mat: np.ndarray, column_order=None):
    """Reduced row echelon form over GF(2).

    Columns are visited in ``column_order`` (default left to right).  Returns
    ``(R, pivots)`` where ``R`` has the nonzero rows first and ``pivots[i]`` is
    the pivot column of row ``i``.
    """
    R = (np.asarray(mat) % 2).astype(np.uint8).copy()
    m, n = R.shape
    order = range(n) if column_order is None else column_order
    pivots = []
    row = 0
    for col in order:
        if row == m:
            break
        hits = np.flatnonzero(R[row:, col]) + row
        if hits.size == 0:
            continue
        p = hits[0]
        if p != row:
            R[[row, p]] = R[[p, row]]
        others = np.flatnonzero(R[:, col])
        others = others[others != row]
        R[others] ^= R[row]
        pivots.append(col)
        row += 1
    return R, pivots


def gf2_rank(mat) -> int:
    return len(gf2_row_reduce(mat)[1])


class LdpcCode:
    """Binary linear code given by a parity-check matrix.

    ``transmit_mask`` marks the code bits that go on the channel; the others
    are punctured.  Encoding places the info word on ``systematic_positions``
    and solves for the remaining (pivot) positions.
    """

    def __init__(self, pcm, transmit_mask=None, name: str | None = None):
        pcm = np.asarray(pcm)
        if pcm.ndim != 2:
            raise ValueError("parity-check matrix must be 2-D")
        if pcm.size and not np.all((pcm == 0) | (pcm == 1)):
            raise ValueError("parity-check matrix must be binary")
        self.pcm = pcm.astype(np.uint8)
        self.pcm.setflags(write=False)
        self.name = name
        m, n = self.pcm.shape
        if transmit_mask is None:
            transmit_mask = np.ones(n, dtype=bool)
        transmit_mask = np.asarray(transmit_mask, dtype=bool)
        if transmit_mask.shape != (n,):
            raise ValueError("transmit mask must have one entry per code bit")
        self.transmit_mask = transmit_mask
        self.transmit_mask.setflags(write=False)

        # pivots taken right-to-left so the systematic part tends to be the leading columns
        R, pivots = gf2_row_reduce(self.pcm, column_order=range(n - 1, -1, -1))
        self.rank = len(pivots)
        self._reduced = R[: self.rank]
        self.parity_positions = np.array(pivots, dtype=np.int64)
        free = np.setdiff1d(np.arange(n), self.parity_positions)
        self.systematic_positions = free
        # c[pivot_i] = sum_j R[i, free_j] u_j  (mod 2)
        self._parity_map = self._reduced[:, free].astype(np.uint8)

    @property
    def n(self) -> int:
        return self.pcm.shape[1]

    @property
    def m(self) -> int:
        return self.pcm.shape[0]

    @property
    def k(self) -> int:
        return self.n - self.rank

    @property
    def n_transmitted(self) -> int:
        return int(self.transmit_mask.sum())

    @property
    def punctured_positions(self) -> np.ndarray:
        return np.flatnonzero(~self.transmit_mask)

    @property
    def transmitted_positions(self) -> np.ndarray:
        return np.flatnonzero(self.transmit_mask)

    @property
    def rate(self) -> float:
        return self.k / self.n_transmitted

    def __repr__(self):
        label = f"{self.name!r}, " if self.name else ""
        return f"LdpcCode({label}n={self.n}, k={self.k}, transmitted={self.n_transmitted})"

    def encode(self, u) -> np.ndarray:
        """Codeword(s) for info word(s) ``u`` of shape (..., K)."""
        u = np.asarray(u)
        if u.shape[-1] != self.k:
            raise ValueError(f"info word length {u.shape[-1]} != K={self.k}")
        u8 = (u % 2).astype(np.uint8)
        c = np.zeros(u.shape[:-1] + (self.n,), dtype=np.int8)
        c[..., self.systematic_positions] = u8
        parity = (u8.astype(np.int64) @ self._parity_map.T.astype(np.int64)) % 2
        c[..., self.parity_positions] = parity
        return c

    def generator_matrix(self) -> np.ndarray:
        return self.encode(np.eye(self.k, dtype=np.int8))

    def syndrome(self, c) -> np.ndarray:
        c = np.asarray(c).astype(np.int64)
        return (c @ self.pcm.T.astype(np.int64)) % 2

    def is_codeword(self, c) -> np.ndarray:
        return ~np.any(self.syndrome(c), axis=-1)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Tanner-graph edges as (check row, code column), row-major."""
        rows, cols = np.nonzero(self.pcm)
        return rows, cols

    @classmethod
    def empty(cls, n: int) -> "LdpcCode":
        """Uncoded 'code' with no parity checks (K = N)."""
        return cls(np.zeros((0, n), dtype=np.uint8), name="uncoded")


# -- alist I/O ----------------------------------------------------------------


def _int_rows(lines, start, count, path):
    out = []
    for i in range(count):
        try:
            out.append([int(t) for t in lines[start + i].split()])
        except (IndexError, ValueError) as exc:
            raise AlistFormatError(f"{path}: bad line {start + i + 1}") from exc
    return out


def parse_alist(text: str, path="<alist>") -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 4:
        raise AlistFormatError(f"{path}: too few lines")
    try:
        n, m = (int(t) for t in lines[0].split()[:2])
        max_col, max_row = (int(t) for t in lines[1].split()[:2])
        col_deg = [int(t) for t in lines[2].split()]
        row_deg = [int(t) for t in lines[3].split()]
    except ValueError as exc:
        raise AlistFormatError(f"{path}: malformed header") from exc
    if len(col_deg) != n or len(row_deg) != m:
        raise AlistFormatError(f"{path}: degree lists do not match dimensions {n}x{m}")
    if max(col_deg, default=0) > max_col or max(row_deg, default=0) > max_row:
        raise AlistFormatError(f"{path}: degree exceeds declared maximum")
    if len(lines) < 4 + n + m:
        raise AlistFormatError(f"{path}: expected {n} column and {m} row lists")
    col_lists = _int_rows(lines, 4, n, path)
    row_lists = _int_rows(lines, 4 + n, m, path)
    pcm = np.zeros((m, n), dtype=np.uint8)
    for j, entries in enumerate(col_lists):
        nz = [e for e in entries if e != 0]
        if len(nz) != col_deg[j]:
            raise AlistFormatError(f"{path}: column {j + 1} lists {len(nz)} entries, degree says {col_deg[j]}")
        if len(set(nz)) != len(nz):
            raise AlistFormatError(f"{path}: duplicate edge in column {j + 1}")
        for r in nz:
            if not 1 <= r <= m:
                raise AlistFormatError(f"{path}: row index {r} out of range in column {j + 1}")
            pcm[r - 1, j] = 1
    check = np.zeros_like(pcm)
    for i, entries in enumerate(row_lists):
        nz = [e for e in entries if e != 0]
        if len(nz) != row_deg[i]:
            raise AlistFormatError(f"{path}: row {i + 1} lists {len(nz)} entries, degree says {row_deg[i]}")
        if len(set(nz)) != len(nz):
            raise AlistFormatError(f"{path}: duplicate edge in row {i + 1}")
        for c in nz:
            if not 1 <= c <= n:
                raise AlistFormatError(f"{path}: column index {c} out of range in row {i + 1}")
            check[i, c - 1] = 1
    if not np.array_equal(pcm, check):
        raise AlistFormatError(f"{path}: row and column lists disagree")
    return pcm


def format_alist(pcm) -> str:
    pcm = np.asarray(pcm)
    m, n = pcm.shape
    col_deg = pcm.sum(axis=0).astype(int)
    row_deg = pcm.sum(axis=1).astype(int)
    lines = [f"{n} {m}", f"{col_deg.max(initial=0)} {row_deg.max(initial=0)}",
             " ".join(map(str, col_deg)), " ".join(map(str, row_deg))]
    for j in range(n):
        lines.append(" ".join(str(r + 1) for r in np.flatnonzero(pcm[:, j])))
    for i in range(m):
        lines.append(" ".join(str(c + 1) for c in np.flatnonzero(pcm[i])))
    return "\n".join(lines) + "\n"


def write_alist(pcm, path, punctured=None) -> None:
    path = Path(path)
    path.write_text(format_alist(pcm))
    if punctured is not None and len(punctured):
        puncture_sidecar(path).write_text("".join(f"{int(i)}\n" for i in punctured))


def puncture_sidecar(path) -> Path:
    path = Path(path)
    return path.with_suffix(".punct")


def read_punctured(path, n: int) -> np.ndarray:
    idx = []
    for ln in Path(path).read_text().splitlines():
        ln = ln.split("#")[0].strip()
        if not ln:
            continue
        try:
            idx.append(int(ln))
        except ValueError as exc:
            raise AlistFormatError(f"{path}: bad puncture index {ln!r}") from exc
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n or len(set(idx.tolist())) != idx.size):
        raise AlistFormatError(f"{path}: puncture indices must be distinct and within [0, {n})")
    return idx


def load_alist(path, puncture_path=None, k: int | None = None) -> LdpcCode:
    """Load a code from an alist file.

    Punctured columns come from ``puncture_path`` or, if absent, from a
    ``<name>.punct`` sidecar next to the alist file.  ``k`` (optional) is a
    declared dimension checked against the rank of the matrix.
    """
    path = Path(path)
    pcm = parse_alist(path.read_text(), path)
    mask = np.ones(pcm.shape[1], dtype=bool)
    sidecar = Path(puncture_path) if puncture_path is not None else puncture_sidecar(path)
    if sidecar.exists():
        mask[read_punctured(sidecar, pcm.shape[1])] = False
    elif puncture_path is not None:
        raise FileNotFoundError(sidecar)
    code = LdpcCode(pcm, mask, name=path.stem)
    if k is not None and code.k != k:
        raise AlistFormatError(f"{path}: declared K={k} but rank gives K={code.k}")
    return code


BUNDLED_CODES = {
    "hamming74": "hamming_7_4.alist",
    "ldpc132": "ldpc_132_66.alist",
    "ldpc32": "ldpc_32_16.alist",
}


def bundled_path(name: str) -> Path:
    fname = BUNDLED_CODES.get(name, name)
    return Path(str(resources.files("gnnjed") / "data" / fname))


def load_code(name_or_path) -> LdpcCode:
    """Load a bundled code by short name or any alist path."""
    p = Path(name_or_path)
    if p.exists():
        return load_alist(p)
    bp = bundled_path(str(name_or_path))
    if bp.exists():
        return load_alist(bp)
    raise FileNotFoundError(f"no code named {name_or_path!r}; bundled: {sorted(BUNDLED_CODES)}")


def construct_ldpc(n_info: int, n_parity: int, info_degrees, seed: int = 0, max_tries: int = 200) -> np.ndarray:
    """Parity-check matrix ``[A | B]`` with a dual-diagonal parity part ``B``.

    ``A`` has the column weights in ``info_degrees``; rows are chosen greedily
    to balance row weights and avoid length-4 cycles.  ``B`` is lower
    bidiagonal, so the matrix has full row rank.
    """
    rng = np.random.default_rng(seed)
    info_degrees = np.broadcast_to(np.asarray(info_degrees, dtype=int), (n_info,))
    B = np.eye(n_parity, dtype=np.uint8)
    B[np.arange(1, n_parity), np.arange(n_parity - 1)] = 1
    for _ in range(max_tries):
        A = np.zeros((n_parity, n_info), dtype=np.uint8)
        ok = True
        for j in np.argsort(-info_degrees, kind="stable"):
            H = np.concatenate([A, B], axis=1)
            weight = H.sum(axis=1).astype(float)
            chosen: list[int] = []
            for _ in range(info_degrees[j]):
                cand = [r for r in range(n_parity) if r not in chosen]
                overlap = np.zeros(n_parity)
                if chosen:
                    # rows that share another column with an already chosen row close a 4-cycle
                    cols = np.flatnonzero(H[chosen].any(axis=0))
                    overlap = H[:, cols].sum(axis=1)
                score = [(overlap[r] > 0, weight[r], rng.random()) for r in cand]
                r = cand[int(np.argmin([s[0] * 1e6 + s[1] + s[2] for s in score]))]
                if overlap[r] > 0:
                    ok = False
                chosen.append(r)
            A[chosen, j] = 1
        if ok:
            break
    return np.concatenate([A, B], axis=1)


# -- interleaving -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Interleaver:
    """Permutation with ``interleave(v)[k] = v[perm[k]]``."""

    perm: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError("interleaver must be a permutation of 0..n-1")
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        perm.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "inverse", inv)

    @classmethod
    def identity(cls, n: int) -> "Interleaver":
        return cls(np.arange(n))

    @classmethod
    def random(cls, n: int, seed: int) -> "Interleaver":
        return cls(np.random.default_rng(seed).permutation(n), seed)

    def __len__(self):
        return self.perm.size

    def interleave(self, v):
        v = np.asarray(v)
        if v.shape[-1] != self.perm.size:
            raise ValueError(f"length {v.shape[-1]} != interleaver length {self.perm.size}")
        return v[..., self.perm]

    def deinterleave(self, v):
        v = np.asarray(v)
        if v.shape[-1] != self.perm.size:
            raise ValueError(f"length {v.shape[-1]} != interleaver length {self.perm.size}")
        return v[..., self.inverse]
