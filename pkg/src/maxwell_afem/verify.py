"""Numerical checks of the identities and properties behind the adaptive scheme.

Every check returns plain numbers; :class:`TheoryReport` collects them with
pass/fail flags for printing or CSV export.
"""
import csv
import io as _io
import math
from dataclasses import dataclass, field

import numpy as np

from . import mesh as meshmod
from .adapt import pair_norms_sq, transfer_mixed
from .exceptions import SignError
from .mixed import MixedSolution, to_mixed

__all__ = [
    "MixedSolution", "to_mixed", "CheckResult", "TheoryReport",
    "check_mixed_invariants", "check_eigenvalue_identity", "check_reference_identity",
    "check_superconvergence", "check_quasi_orthogonality", "contraction_xi",
    "check_contraction", "check_reliability_efficiency", "discrete_reliability_ratios",
    "check_bounded_band", "check_indicator_relation", "theory_report", "run_theory_checks",
]

IDENTITY_TOL = 1e-6
BAND_LIMIT = 50.0


@dataclass
class CheckResult:
    name: str
    level: str
    lhs: float
    rhs: float
    discrepancy: float
    passed: bool
    note: str = ""


@dataclass
class TheoryReport:
    results: list = field(default_factory=list)
    notices: list = field(default_factory=list)

    def add(self, name, level, lhs, rhs, discrepancy, passed, note=""):
        if not math.isfinite(discrepancy):
            passed = False
        self.results.append(CheckResult(name, str(level), float(lhs), float(rhs),
                                        float(discrepancy), bool(passed), note))

    def skip(self, name, reason):
        self.notices.append(f"{name}: skipped ({reason})")

    def names(self):
        return list(dict.fromkeys(r.name for r in self.results))

    def check_passed(self, name):
        return all(r.passed for r in self.results if r.name == name)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def to_csv(self, path=None):
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "level", "lhs", "rhs", "discrepancy", "passed", "note"])
        for r in self.results:
            w.writerow([r.name, r.level, f"{r.lhs:.17g}", f"{r.rhs:.17g}",
                        f"{r.discrepancy:.17g}", int(r.passed), r.note])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary(self):
        lines = []
        for name in self.names():
            rows = [r for r in self.results if r.name == name]
            worst = max(rows, key=lambda r: r.discrepancy)
            status = "PASS" if all(r.passed for r in rows) else "FAIL"
            lines.append(f"{status} {name}: {len(rows)} rows, worst {worst.discrepancy:.3e}"
                         f" at {worst.level}")
        lines.extend(self.notices)
        return "\n".join(lines)


# -- single-level invariants ---------------------------------------------------

def check_mixed_invariants(level, tol=1e-10):
    """(|1 - ||p_h||| , curl identity defect) for a solved level."""
    m = level.mixed
    return abs(1.0 - m.p_norm()), m.curl_identity_defect(level.mu)


def check_indicator_relation(level):
    """max_K |eta_s,K^2 - eta_m,K^2 / lambda_h| / eta_m,K^2."""
    s, m = level.eta.eta_sq, level.eta_mixed.eta_sq
    diff = np.abs(s - m / level.lam)
    scale = np.where(m > 0, m, 1.0)
    return float(np.max(diff / scale))


# -- cross-level identities ----------------------------------------------------

def _lift(level_H, level_h):
    """(coarse mixed solution on the fine space, fine mixed solution)."""
    fine = level_h.mixed
    return transfer_mixed(level_H.mixed, level_h.space), fine


def check_eigenvalue_identity(level_H, level_h, check_sign=True):
    """Discrete identity lambda_h - lambda_H = ||s_h - s_H||^2 - lambda_H ||p_h - p_H||^2.

    Returns ``(lhs, rhs, discrepancy)`` with the discrepancy relative to
    ``max(|lhs|, ||s_h - s_H||^2)``.
    """
    if level_H is level_h:
        return 0.0, 0.0, 0.0
    coarse, fine = _lift(level_H, level_h)
    M = level_h.M
    if check_sign:
        ss = float(fine.sigma @ (M @ coarse.sigma))
        pp = float(np.sum(level_h.mesh.volumes * np.einsum("td,td->t", fine.p, coarse.p)))
        if ss < 0 or pp < 0:
            raise SignError(f"eigenvectors have opposite signs ((s_h, s_H) = {ss:.3e},"
                            f" (p_h, p_H) = {pp:.3e})")
    ds, dp = pair_norms_sq(fine, coarse, M)
    lhs = level_h.lam - level_H.lam
    rhs = ds - level_H.lam * dp
    scale = max(abs(lhs), ds)
    return lhs, rhs, (abs(lhs - rhs) / scale if scale > 0 else 0.0)


def check_reference_identity(level, reference):
    """Reference-vs-discrete identity lambda - lambda_h = ||s - s_h||^2 - lambda_h ||p - p_h||^2."""
    e = reference.errors(level)
    lhs = reference.lam - level.lam
    rhs = e["sigma_sq"] - level.lam * e["p_sq"]
    scale = max(abs(lhs), e["sigma_sq"])
    return lhs, rhs, (abs(lhs - rhs) / scale if scale > 0 else 0.0)


def superconvergence_ratio(level, reference):
    """||P_h p - p_h|| / (||s - s_h|| + ||p - p_h||) with the numerator and denominator."""
    pp = reference.projected_p(level)
    diff = pp - level.mixed.p
    num = math.sqrt(float(np.sum(level.mesh.volumes * np.einsum("td,td->t", diff, diff))))
    e = reference.errors(level)
    den = e["sigma"] + e["p"]
    return num, den, (num / den if den > 0 else 0.0)


def check_superconvergence(levels, reference):
    """Rows ``(index, n_dofs, numerator, denominator, ratio)`` and whether ratios decrease."""
    rows = []
    for lv in levels:
        num, den, ratio = superconvergence_ratio(lv, reference)
        rows.append((lv.index, lv.space.n_dofs, num, den, ratio))
    ratios = [r[-1] for r in rows]
    return rows, all(b < a for a, b in zip(ratios, ratios[1:]))


def quasi_orthogonality_residual(dist_sq, err_H_sq, err_h_sq):
    """(LHS - (err_H^2 - err_h^2)) / (err_H^2 + err_h^2); zero under exact Pythagoras."""
    denom = err_H_sq + err_h_sq
    if denom == 0:
        return 0.0
    return (dist_sq - (err_H_sq - err_h_sq)) / denom


def check_quasi_orthogonality(level_H, level_h, reference):
    """Normalised quasi-orthogonality residual for a nested pair."""
    eH = reference.errors(level_H)
    eh = reference.errors(level_h)
    if level_H is level_h:
        dist = 0.0
    else:
        coarse, fine = _lift(level_H, level_h)
        # compare with the same orientation as the reference alignment
        s = eH["sign"] * eh["sign"]
        ds, dp = pair_norms_sq(fine, coarse, level_h.M, s)
        dist = ds + dp
    err_H = eH["sigma_sq"] + eH["p_sq"]
    err_h = eh["sigma_sq"] + eh["p_sq"]
    return quasi_orthogonality_residual(dist, err_H, err_h)


# -- sequence properties -------------------------------------------------------

def contraction_xi(records, beta=1.0):
    """xi_l^2 = eta_m^2 + beta (||s - s_l||^2 + ||p - p_l||^2) from records with errors."""
    out = []
    for r in records:
        if r.err_sigma is None or r.eta_sq_mixed is None:
            raise ValueError("records carry no reference errors")
        out.append(r.eta_sq_mixed + beta * (r.err_sigma ** 2 + r.err_p ** 2))
    return np.array(out)


def check_contraction(xi_sq, first=2, last=10):
    """Ratios xi_{l+1}^2 / xi_l^2 and their max over first <= l <= last.

    ``xi_sq`` is a sequence of floats.  Returns ``(ratios, max_ratio, passed)``.
    """
    xi = np.asarray(xi_sq, dtype=float)
    if len(xi) < 4:
        raise ValueError("contraction check needs at least 4 levels")
    ratios = xi[1:] / xi[:-1]
    window = ratios[first:last + 1]
    if len(window) == 0:
        window = ratios
    mx = float(window.max())
    return ratios, mx, mx < 1.0


def check_bounded_band(values, first=2, limit=BAND_LIMIT):
    """max / min of positive ``values[first:]``; infinite if a value is 0 or inf."""
    v = np.asarray(values, dtype=float)[first:]
    if len(v) == 0:
        return float("nan"), False
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        return float("inf"), False
    band = float(v.max() / v.min())
    return band, band <= limit


def check_reliability_efficiency(records, first=2, limit=BAND_LIMIT, lam_ref=None):
    """Bands of r1 = err_curl / eta and r2 = |lambda_ref - lambda_l| / eta^2.

    Returns a dict with the per-level ratios, the two bands, pass flags and
    the levels where eta = 0 while the error is not (reliability violation).
    """
    r1, r2, violations = [], [], []
    for r in records:
        eta_sq = r.eta_sq
        lam_err = abs(lam_ref - r.lam) if lam_ref is not None else None
        err = r.err_curl
        if eta_sq <= 0:
            if (err or 0) > 0 or (lam_err or 0) > 0:
                violations.append(r.level)
            r1.append(float("inf"))
            r2.append(float("inf"))
            continue
        r1.append(err / math.sqrt(eta_sq) if err is not None else float("nan"))
        r2.append(lam_err / eta_sq if lam_err is not None else float("nan"))
    b1, ok1 = check_bounded_band(r1, first, limit) if records[0].err_curl is not None \
        else (float("nan"), True)
    b2, ok2 = check_bounded_band(r2, first, limit) if lam_ref is not None \
        else (float("nan"), True)
    return {"r1": r1, "r2": r2, "band_r1": b1, "band_r2": b2,
            "passed_r1": ok1 and not violations, "passed_r2": ok2 and not violations,
            "violations": violations}


def discrete_reliability_ratios(levels):
    """(||s_h - s_H|| + ||p_h - p_H||) / eta_m,H(T_H minus T_h) per consecutive pair."""
    out = []
    for H, h in zip(levels, levels[1:]):
        if H.mesh.lineage == h.mesh.lineage:
            refined = meshmod.ancestors_not_in(H.mesh, h.mesh)
        else:
            refined = set(range(H.mesh.n_tets))
        coarse, fine = _lift(H, h)
        ds, dp = pair_norms_sq(fine, coarse, h.M)
        eta = math.sqrt(H.eta_mixed.subset(refined)) if refined else 0.0
        dist = math.sqrt(ds) + math.sqrt(dp)
        out.append(dist / eta if eta > 0 else float("inf"))
    return out


# -- harness -------------------------------------------------------------------

BETAS = (0.1, 1.0, 10.0)


def theory_report(records, levels, reference=None, lattice=False):
    """Run every applicable check over a solved level sequence."""
    rep = TheoryReport()
    for lv in levels:
        norm, curl = check_mixed_invariants(lv)
        rep.add("mixed_normalization", lv.index, lv.mixed.p_norm(), 1.0, norm, norm <= 1e-10)
        rep.add("mixed_curl_identity", lv.index, curl, 0.0, curl, curl <= 1e-10)
        rel = check_indicator_relation(lv)
        rep.add("indicator_relation", lv.index, rel, 0.0, rel, rel <= 1e-12)
    for H, h in zip(levels, levels[1:]):
        lhs, rhs, d = check_eigenvalue_identity(H, h)
        rep.add("eigenvalue_identity", f"{H.index}->{h.index}", lhs, rhs, d, d <= IDENTITY_TOL)
    if len(levels) > 1:
        ratios = discrete_reliability_ratios(levels)
        band, ok = check_bounded_band(ratios, first=2)
        if math.isnan(band):
            rep.skip("discrete_reliability", "fewer than 3 refinement steps past level 2")
        else:
            rep.add("discrete_reliability", "band", max(ratios[2:]), min(ratios[2:]), band, ok)

    if reference is None:
        rep.skip("reference checks", "no reference configured")
        return rep

    for lv in levels:
        lhs, rhs, d = check_reference_identity(lv, reference)
        rep.add("reference_identity", lv.index, lhs, rhs, d, d <= IDENTITY_TOL)

    rows, _ = check_superconvergence(levels, reference)
    for prev, row in zip([None] + rows[:-1], rows):
        ok = prev is None or row[-1] < prev[-1]
        rep.add("superconvergence", row[0], row[2], row[3], row[4], ok,
                "ratio must decrease" if lattice else "informational")
        if not lattice:
            rep.results[-1].passed = True

    qo = [check_quasi_orthogonality(H, h, reference) for H, h in zip(levels, levels[1:])]
    for i, r in enumerate(qo):
        ok = i == 0 or abs(r) < abs(qo[i - 1])
        rep.add("quasi_orthogonality", f"{levels[i].index}->{levels[i + 1].index}",
                r, 0.0, abs(r), ok if lattice else True,
                "residual must decrease" if lattice else "informational")
    if qo and not lattice:
        tail = abs(qo[-1]) < abs(qo[0])
        rep.add("quasi_orthogonality_trend", "first->last", abs(qo[0]), abs(qo[-1]),
                abs(qo[-1]), tail)

    if len(records) >= 4 and not lattice:
        best = math.inf
        for beta in BETAS:
            _, mx, _ = check_contraction(contraction_xi(records, beta))
            best = min(best, mx)
            rep.add("contraction_beta", f"beta={beta:g}", mx, 1.0, mx, True, "informational")
        rep.add("contraction", "best beta", best, 1.0, best, best < 1.0)
    else:
        rep.skip("contraction", "needs at least 4 adaptive levels")

    rel = check_reliability_efficiency(records, lam_ref=reference.lam)
    if len(records) >= 3:
        rep.add("reliability_efficiency_r1", "band", max(rel["r1"][2:]), min(rel["r1"][2:]),
                rel["band_r1"], rel["passed_r1"])
        rep.add("reliability_efficiency_r2", "band", max(rel["r2"][2:]), min(rel["r2"][2:]),
                rel["band_r2"], rel["passed_r2"])
    else:
        rep.skip("reliability_efficiency", "needs at least 3 levels")
    return rep


def run_theory_checks(cfg):
    """Solve the configured sequence and check it.

    The cube is always run as a lattice sequence (n, 2n, 4n, ...): its
    lowest eigenvalue is triple, and only the symmetric meshes keep the
    discrete eigenvector from rotating inside the cluster.
    """
    from dataclasses import replace

    from .adapt import run_with_reference

    lattice = cfg.domain == "cube" or cfg.refinement == "lattice"
    if lattice:
        cfg = replace(cfg, refinement="lattice")
    records, levels, ref = run_with_reference(cfg)
    return theory_report(records, levels, ref, lattice), records, levels
