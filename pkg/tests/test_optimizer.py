import math

import numpy as np
import pytest

from dephasimeter import closed_form as cf
from dephasimeter import optimizer as opt
from dephasimeter.errors import DomainError, OptimizationError
from dephasimeter.noise import DecayCoefficient

MARKOV = DecayCoefficient.markov(1.0)
ZENO = DecayCoefficient.zeno(1.0, 1.0)


def test_golden_section_finds_quadratic_minimum():
    x, fx, edge = opt.golden_section(lambda x: (x - 0.3) ** 2 + 1.0, -2.0, 2.0)
    assert x == pytest.approx(0.3, abs=1e-7)
    assert fx == pytest.approx(1.0, abs=1e-12)
    assert not edge
    x, _, _ = opt.golden_section(lambda x: (math.log(x) - 1.0) ** 2, 1e-3, 1e3, log=True)
    assert x == pytest.approx(math.e, rel=1e-6)


def test_golden_section_reports_edges_and_failures():
    _, _, edge = opt.golden_section(lambda x: x, 1.0, 2.0)
    assert edge
    with pytest.raises(OptimizationError) as info:
        opt.golden_section(lambda x: math.inf, 0.0, 1.0, coarse=8)
    assert len(info.value.profile) == 8
    with pytest.raises(DomainError):
        opt.golden_section(lambda x: x, 1.0, 1.0)


def test_noiseless_css_optimum():
    N, T, tau = 1024, 2.0, 0.5
    r = opt.optimize_protocol("css", None, N, T, tau=tau)
    J = N / 2
    assert r.theta == pytest.approx(math.pi / 4, abs=1e-6)
    assert r.db == pytest.approx(math.sqrt(2) / (math.sqrt(T * tau * J) * (2 * J - 1)), rel=1e-9)
    assert r.db * math.sqrt(T * tau) * N**1.5 == pytest.approx(2.0, rel=2e-3)


def test_markov_fixed_theta_matches_asymptotic_optimum():
    N, T = 4096, 1.0
    r = opt.optimize_protocol("css", MARKOV, N, T, theta=math.pi / 4)
    ref = cf.css_optimum_fixed_theta("markov", N / 2, T, 1.0)
    assert r.tau == pytest.approx(ref["tau"], rel=0.01)
    assert r.db == pytest.approx(ref["db"], rel=0.01)
    assert not r.at_boundary


@pytest.mark.parametrize("decay", [MARKOV, ZENO], ids=["markov", "zeno"])
def test_exact_path_agrees_with_closed_form(decay):
    N, T = 16, 1.0
    a = opt.optimize_protocol("css", decay, N, T, path="closedform", coarse=24)
    b = opt.optimize_protocol("css", decay, N, T, path="exact", coarse=24)
    assert b.db == pytest.approx(a.db, rel=1e-6)
    assert b.theta == pytest.approx(a.theta, abs=1e-4)


@pytest.mark.parametrize("decay", [None, MARKOV, ZENO], ids=["noiseless", "markov", "zeno"])
def test_ratio_readout_matches_jy_readout_at_optimum(decay):
    N = 256
    a = opt.optimize_protocol("css", decay, N, 1.0, readout="Jy")
    b = opt.optimize_protocol("css", decay, N, 1.0, readout="ratio")
    assert b.db == pytest.approx(a.db, rel=1e-9)


@pytest.mark.parametrize("state,decay,path", [("css", ZENO, "closedform"), ("phi", MARKOV, "closedform"),
                                              ("ku", ZENO, "gaussian")])
def test_audit_finds_no_better_point(state, decay, path):
    kw = {"qfi_terms": "leading"} if path == "gaussian" else {}
    r = opt.optimize_protocol(state, decay, 256, 1.0, path, **kw)
    assert opt.audit(r, state, decay, probes=100, seed=1, **kw) >= 1 - 1e-9


def test_optimized_uncertainty_decreases_with_N():
    Ns = opt.SweepPlan.geometric(4, 9, per_octave=2)
    res = opt.sweep(opt.SweepPlan("css", ZENO, Ns=Ns))
    dbs = [r.db for r in res]
    assert all(a > b for a, b in zip(dbs, dbs[1:]))
    assert [r.N for r in res] == list(Ns)
    par = opt.sweep(opt.SweepPlan("css", ZENO, Ns=Ns), workers=3)
    assert [r.db for r in par] == dbs


def test_fit_scaling_recovers_power_law():
    Ns = np.array(opt.SweepPlan.geometric(3, 10))
    fit = opt.fit_scaling(Ns, 3.0 * Ns**-1.25)
    assert fit.exponent == pytest.approx(-1.25, abs=1e-12)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-12)
    assert fit.window[0] >= Ns[0] * 10
    fixed = opt.fit_scaling(Ns, 3.0 * Ns**-1.25, fixed_exponent=-1.0)
    assert fixed.prefactor == pytest.approx(3.0 * Ns[-1] ** -0.25)


def test_fit_scaling_refuses_short_sweeps():
    Ns = np.array([64, 128, 256, 512])
    with pytest.raises(DomainError):
        opt.fit_scaling(Ns, Ns**-1.0)
    with pytest.raises(DomainError):
        opt.fit_scaling(Ns, Ns**-1.0, min_span_decades=0.5, exclude_decades=0.5)


def test_extrapolate_prefactor():
    Ns = np.array([256.0, 512, 1024, 2048, 4096])
    assert opt.extrapolate_prefactor(Ns, 0.7 + 2.0 * Ns**-0.4, 0.4) == pytest.approx(0.7, rel=1e-12)


def test_sweep_plan_validation():
    assert opt.SweepPlan.geometric(2, 4, per_octave=1) == (4, 8, 16)
    with pytest.raises(DomainError):
        opt.SweepPlan("css", None, Ns=(8, 4))
    with pytest.raises(DomainError):
        opt.SweepPlan("css", None, path="exact", Ns=(8, 1024))
    with pytest.raises(DomainError):
        opt.objective("pe", None, 16, 1.0, path="closedform")
    with pytest.raises(DomainError):
        opt.objective("phi", None, 16, 1.0, path="gaussian")


def test_boundary_minimizer_can_be_refused():
    with pytest.raises(OptimizationError):
        opt.optimize_protocol("css", MARKOV, 256, 1.0, tau_bracket=(1e-3, 2e-3), allow_boundary=False)


def test_gaussian_result_carries_validity():
    css = opt.optimize_protocol("css", ZENO, 512, 1.0, "gaussian", qfi_terms="leading")
    assert css.valid is True
    # the KU excitation fraction falls with N: warn at moderate N, valid at large N
    statuses = [opt.optimize_protocol("ku", ZENO, N, 1.0, "gaussian", qfi_terms="leading").validity_status
                for N in (64, 512, 4096)]
    assert statuses == ["invalid", "warn", "valid"]
    # the planar-squeezed preset carries about J/2 excitations and is flagged, not refused
    pe = opt.optimize_protocol("pe", ZENO, 512, 1.0, "gaussian", qfi_terms="leading")
    assert pe.valid is False
    assert pe.validity_status in ("warn", "invalid")
    assert math.isfinite(pe.db)


def test_table1_flags_printed_noiseless_pe_constant():
    out = opt.table1(Ns=opt.SweepPlan.geometric(8, 10, per_octave=2))
    flagged = {(d["state"], d["regime"]) for d in out["discrepancies"]}
    assert ("pe", "noiseless") in flagged
    assert ("phi", "markov") not in flagged
    assert ("phi", "zeno") not in flagged
    assert len(out["rows"]) == sum(len(v) for v in opt.REFERENCE_TABLE.values())
