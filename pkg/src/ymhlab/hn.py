"""Harder-Narasimhan machinery: slopes, an exact type oracle for split
backgrounds, filtration validation, limit-type estimation and the dominance
partial order.

The oracle enumerates phi-invariant subsheaves generated by (a) unions of
factor groups closed under the twisted-block adjacency and (b) invariant
subspaces of the constant equal-degree group maps, takes the upper convex
hull in the (rank, degree) plane, and reads the type off the hull corners.
Anything outside the certified family raises OracleUnsupportedError rather
than risking a wrong answer.
"""

import itertools
import numpy as np
from dataclasses import dataclass
from fractions import Fraction

from . import la
from . import functionals as fn
from .bundle import MetricState, build_background, build_higgs
from .constants import COMPLEX, DEGREE_TOL_FACTOR, WHC_TOL_ORACLE
from .errors import InputError, OracleUnsupportedError

_EIG_TOL = 1e-9
_AMBIG_LO, _AMBIG_HI = 1e-12, 1e-7


@dataclass(frozen=True)
class HNType:
    """Nonincreasing slope vector with multiplicities (Def: mu_i = mu(Q_j))."""
    mu: tuple

    def __post_init__(self):
        vals = [Fraction(m) if not isinstance(m, Fraction) else m for m in self.mu]
        object.__setattr__(self, "mu", tuple(vals))
        for a, b in zip(self.mu, self.mu[1:]):
            if a < b:
                raise InputError(f"HN type must be nonincreasing: {self.mu}")

    @property
    def rank(self):
        return len(self.mu)

    @property
    def total(self):
        return sum(self.mu)

    def as_floats(self):
        return np.array([float(m) for m in self.mu])

    def clusters(self):
        """Distinct slope values with multiplicities, descending."""
        out = []
        for m in self.mu:
            if out and out[-1][0] == m:
                out[-1][1] += 1
            else:
                out.append([m, 1])
        return [(v, c) for v, c in out]


@dataclass
class FiltrationStep:
    span: np.ndarray         # (R, r) constant basis, columns span the subsheaf
    rank: int
    degree: Fraction


@dataclass
class FiltrationSpec:
    steps: list              # strictly increasing ranks; last step is E

    def spans(self):
        return [s.span for s in self.steps]

    def quotient_slopes(self):
        mus, prev_r, prev_d = [], 0, Fraction(0)
        for s in self.steps:
            mus.append(Fraction(s.degree - prev_d, s.rank - prev_r))
            prev_r, prev_d = s.rank, s.degree
        return mus


def slope(degree, rank):
    """Exact slope deg/rank of a subsheaf datum."""
    if rank < 1:
        raise InputError(f"slope undefined for rank {rank}")
    return Fraction(degree) / Fraction(rank)


# -- oracle -------------------------------------------------------------------

def _group_invariant_subspaces(C):
    """Canonical invariant subspaces of a small constant matrix.

    Supported shapes: scalar (incl. zero), distinct eigenvalues, and a
    scalar shift of a single nilpotent Jordan chain.  Returns a list of
    (k, m) orthonormal column bases including dims 0 and k.
    """
    k = C.shape[0]
    if k == 1:
        return [np.zeros((1, 0), dtype=COMPLEX), np.eye(1, dtype=COMPLEX)]
    scale = max(1.0, float(np.max(np.abs(C))))
    mean = np.trace(C) / k
    C0 = C - mean * np.eye(k)
    subs = [np.zeros((k, 0), dtype=COMPLEX)]
    if np.max(np.abs(C0)) < _EIG_TOL * scale:
        # scalar: every subspace invariant; coordinate subsets suffice for
        # slope extremization in the split family
        for r in range(1, k + 1):
            for cols in itertools.combinations(range(k), r):
                subs.append(np.eye(k, dtype=COMPLEX)[:, list(cols)])
        return subs
    w, v = np.linalg.eig(C)
    min_gap = min(abs(w[i] - w[j])
                  for i in range(k) for j in range(i + 1, k))
    if min_gap > _EIG_TOL * scale:
        # diagonalizable with distinct eigenvalues: sums of eigenlines
        v = v / np.linalg.norm(v, axis=0, keepdims=True)
        for r in range(1, k + 1):
            for cols in itertools.combinations(range(k), r):
                q, _ = np.linalg.qr(v[:, list(cols)])
                subs.append(q.astype(COMPLEX))
        return subs
    # single Jordan chain (possibly shifted): invariant subspaces are the
    # kernels of the powers of the nilpotent part
    P = np.eye(k, dtype=COMPLEX)
    nilpotent = True
    Pm = C0.copy()
    for _ in range(k):
        Pm = Pm @ C0
    if np.max(np.abs(Pm)) > _EIG_TOL * scale:
        nilpotent = False
    if nilpotent:
        ranks = []
        Pm = np.eye(k, dtype=COMPLEX)
        for m in range(1, k):
            Pm = Pm @ C0
            ranks.append(np.linalg.matrix_rank(Pm, tol=_EIG_TOL * scale))
        if ranks == list(range(k - 1, 0, -1)):
            Pm = np.eye(k, dtype=COMPLEX)
            for m in range(1, k):
                Pm = Pm @ C0
                _, s, vh = np.linalg.svd(Pm)
                null = vh[np.sum(s > _EIG_TOL * scale):, :].conj().T
                subs.append(null.astype(COMPLEX))
            subs.append(np.eye(k, dtype=COMPLEX))
            subs.sort(key=lambda V: V.shape[1])
            return subs
    raise OracleUnsupportedError(
        "equal-degree block map outside the certified family "
        "(need scalar, distinct eigenvalues, or a single Jordan chain)")


def _touches(span, row):
    v = float(np.linalg.norm(span[row, :])) if span.shape[1] else 0.0
    if _AMBIG_LO < v < _AMBIG_HI:
        raise OracleUnsupportedError(
            f"ambiguous invariant-subspace support ({v:.2e}) on a twisted source")
    return v >= _AMBIG_HI


def _contains_coord(span, row):
    if span.shape[1] == 0:
        return False
    e = np.zeros(span.shape[0], dtype=COMPLEX)
    e[row] = 1.0
    resid = e - span @ (span.conj().T @ e)
    v = float(np.linalg.norm(resid))
    if _AMBIG_LO < 1.0 - v < _AMBIG_HI:
        raise OracleUnsupportedError("ambiguous coordinate containment")
    return v < _AMBIG_HI


def _upper_hull(points):
    """Upper convex hull corners of integer points sorted by x."""
    pts = sorted(points)
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (p[0] - x1) * (y2 - y1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def oracle_hn_type(config):
    """Exact HN type and filtration of a supported split configuration.

    Raises OracleUnsupportedError for anything outside the certified family
    (never returns a possibly-wrong answer).
    """
    degrees = list(config.degrees)
    R = len(degrees)
    for b in config.higgs_blocks:
        if b.kind == "aliased":
            raise OracleUnsupportedError("aliased control blocks are not certified")
    # group factors by degree
    group_of = {}
    groups = []
    for i, d in enumerate(degrees):
        if d not in group_of:
            group_of[d] = len(groups)
            groups.append({"degree": d, "members": []})
        groups[group_of[d]]["members"].append(i)
    # internal constant maps and twisted edges
    for g in groups:
        k = len(g["members"])
        g["C"] = np.zeros((k, k), dtype=COMPLEX)
    edges = []
    for b in config.higgs_blocks:
        di, dj = degrees[b.i], degrees[b.j]
        if di == dj:
            g = groups[group_of[di]]
            li = g["members"].index(b.i)
            lj = g["members"].index(b.j)
            g["C"][li, lj] += b.value
        else:
            if abs(b.scale) > _AMBIG_LO:
                edges.append((b.i, b.j))
    for g in groups:
        g["subs"] = _group_invariant_subspaces(g["C"])

    # enumerate closed candidates, track the best degree (and achievers) per rank
    best = {}
    for combo in itertools.product(*[range(len(g["subs"])) for g in groups]):
        spans = [g["subs"][c] for g, c in zip(groups, combo)]
        ok = True
        for (i, j) in edges:
            gj = groups[group_of[degrees[j]]]
            gi = groups[group_of[degrees[i]]]
            sj = spans[group_of[degrees[j]]]
            si = spans[group_of[degrees[i]]]
            if _touches(sj, gj["members"].index(j)) and \
                    not _contains_coord(si, gi["members"].index(i)):
                ok = False
                break
        if not ok:
            continue
        rank = sum(s.shape[1] for s in spans)
        deg = int(sum(g["degree"] * s.shape[1] for g, s in zip(groups, spans)))
        V = np.zeros((R, rank), dtype=COMPLEX)
        col = 0
        for g, s in zip(groups, spans):
            for c in range(s.shape[1]):
                for loc, glob in enumerate(g["members"]):
                    V[glob, col] = s[loc, c]
                col += 1
        if rank not in best or deg > best[rank][0]:
            best[rank] = (deg, [V])
        elif deg == best[rank][0]:
            best[rank][1].append(V)

    hull = _upper_hull([(r, d) for r, (d, _) in best.items()])
    # corners after (0, 0) are the HN filtration steps; interior corners must
    # be achieved by a unique subsheaf (HN uniqueness)
    steps = []
    mu = []
    for (r0, d0), (r1, d1) in zip(hull, hull[1:]):
        _, achievers = best[r1]
        V = achievers[0]
        if 0 < r1 < R:
            p0 = V @ V.conj().T
            for other in achievers[1:]:
                if np.max(np.abs(other @ other.conj().T - p0)) > _AMBIG_HI:
                    raise OracleUnsupportedError(
                        f"non-unique maximal destabilizing subsheaf at rank {r1}")
        steps.append(FiltrationStep(span=V, rank=r1, degree=Fraction(d1)))
        mu.extend([Fraction(d1 - d0, r1 - r0)] * (r1 - r0))
    # nesting of the chain (spans are orthonormal by construction)
    for s0, s1 in zip(steps, steps[1:]):
        P1 = s1.span @ s1.span.conj().T
        resid = s0.span - P1 @ s0.span
        if np.max(np.abs(resid)) > _AMBIG_HI:
            raise OracleUnsupportedError("hull corners do not form a nested chain")
    hn_type = HNType(tuple(mu))
    assert hn_type.total == config.total_degree
    return hn_type, FiltrationSpec(steps)


# -- filtration validation ----------------------------------------------------

def validate_filtration(spec, config, grid, background=None, higgs=None,
                        state=None, whc_tol=WHC_TOL_ORACLE):
    """Check a declared filtration against the initial data: builds the
    H0-orthogonal projector of each step, requires the weak-holomorphy
    residuals below tolerance and the degree formula to reproduce the
    declared degree within 5/n.  Returns a report; never silently passes."""
    if background is None:
        background = build_background(config, grid)
    if higgs is None:
        higgs = build_higgs(config, background)
    if state is None:
        state = MetricState.identity(grid, config.rank)
    n = grid.n
    deg_tol = DEGREE_TOL_FACTOR / n
    rows = []
    ok = True
    for k, step in enumerate(spec.steps):
        V, _ = np.linalg.qr(np.asarray(step.span, dtype=COMPLEX))
        pi0 = V @ V.conj().T
        pi = np.broadcast_to(pi0, (n, n) + pi0.shape).copy()
        r1, r2, r3 = fn.whc_residuals(pi, state, higgs, background)
        deg = fn.degree_via_projection(pi, state, higgs, background)
        declared = float(step.degree)
        row = {
            "step": k + 1, "rank": step.rank, "declared_degree": declared,
            "degree": deg, "r1": r1, "r2": r2, "r3": r3,
            "whc_pass": max(r1, r2, r3) < whc_tol,
            "degree_pass": abs(deg - declared) < deg_tol,
        }
        row["pass"] = row["whc_pass"] and row["degree_pass"]
        ok = ok and row["pass"]
        rows.append(row)
    return {"ok": ok, "steps": rows, "degree_tol": deg_tol, "whc_tol": whc_tol}


# -- limit-type estimation and dominance --------------------------------------

def estimate_limit_type(S):
    """Spatial mean of the pointwise descending spectrum of the mean
    curvature, and the worst-site deviation from that mean."""
    ev = S.eigenvalues() if isinstance(S, fn.MeanCurvature) \
        else la.eigvalsh_desc(la.herm(np.asarray(S)))
    lam = np.mean(ev, axis=(0, 1))
    dev = float(np.max(np.abs(ev - lam)))
    return lam, dev


def dominance_compare(mu, lam, tol=1e-9):
    """Partial-sum dominance verdict for equal-length, equal-sum tuples:
    one of 'less-equal', 'greater-equal', 'equal', 'incomparable'."""
    mu = mu.as_floats() if isinstance(mu, HNType) else np.asarray(mu, dtype=float)
    lam = lam.as_floats() if isinstance(lam, HNType) else np.asarray(lam, dtype=float)
    if mu.shape != lam.shape:
        raise InputError("dominance_compare needs equal-length tuples")
    if abs(np.sum(mu) - np.sum(lam)) > tol * max(1.0, np.max(np.abs(mu))):
        raise InputError("dominance order undefined for unequal total sums")
    pmu, plam = np.cumsum(mu), np.cumsum(lam)
    le = bool(np.all(pmu <= plam + tol))
    ge = bool(np.all(pmu >= plam - tol))
    if le and ge:
        return "equal"
    if le:
        return "less-equal"
    if ge:
        return "greater-equal"
    return "incomparable"


def partial_sum_dominates(est, oracle_mu, tol):
    """True when the running estimate's partial sums dominate the oracle's
    within tol (finite-time form of the dominance statement)."""
    est = np.asarray(est, dtype=float)
    mu = oracle_mu.as_floats() if isinstance(oracle_mu, HNType) else \
        np.asarray(oracle_mu, dtype=float)
    return bool(np.all(np.cumsum(est) >= np.cumsum(mu) - tol))


# -- limit splitting check ------------------------------------------------------

def seshadri_graded_check(config, final_state, higgs, background,
                          whc_tol=1e-3, gap_factor=10.0):
    """Verify the converged flow splits as the oracle's graded pieces:
    eigenvalue clusters of the final mean curvature match the quotient
    ranks/slopes and the spectral projections are weakly phi-holomorphic.

    Returns a report with status 'pass', 'fail', or 'indeterminate' (cluster
    gap below gap_factor * spatial_dev)."""
    hn_type, _ = oracle_hn_type(config)
    clusters = hn_type.clusters()
    pd = fn.pair_frame(final_state, higgs, background)
    S = la.herm(pd.S)
    ev, vec = la.eigh_desc(S)
    lam, dev = estimate_limit_type(fn.MeanCurvature(background.grid, S, "pair"))
    report = {"oracle_clusters": [(float(v), c) for v, c in clusters],
              "estimate": lam.tolist(), "spatial_dev": dev, "clusters": []}
    # measured cluster means follow the oracle multiplicity pattern
    pos = 0
    means = []
    for value, count in clusters:
        means.append(float(np.mean(lam[pos:pos + count])))
        pos += count
    gaps = [means[i] - means[i + 1] for i in range(len(means) - 1)]
    if gaps and min(gaps) < gap_factor * max(dev, 1e-15):
        report["status"] = "indeterminate"
        report["reason"] = (f"cluster gap {min(gaps):.3e} below "
                            f"{gap_factor} * spatial_dev")
        return report
    ok = True
    pos = 0
    for (value, count), mean in zip(clusters, means):
        cols = vec[..., pos:pos + count]
        pi = cols @ la.dagger(cols)
        r1, r2, r3 = fn.whc_residuals(pi, final_state, higgs, background)
        entry = {"slope": float(value), "rank": count, "measured": mean,
                 "r1": r1, "r2": r2, "r3": r3,
                 "pass": max(r1, r2, r3) < whc_tol}
        ok = ok and entry["pass"]
        report["clusters"].append(entry)
        pos += count
    report["status"] = "pass" if ok else "fail"
    return report
