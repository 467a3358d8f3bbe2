"""Oracle checks for the simulator, plus optional full-scale acceptance runs."""

from __future__ import annotations

import argparse
import logging
import math
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import constants

from app.config import DEFAULT_NT_CHI, ExperimentConfig
from app.domain.models import OATParams
from app.interferometry.pulses import balance_phase
from app.interferometry.sweep import prepare_sequence
from app.jobs.common import add_common_arguments, execute, resolve_artifacts_dir, run_id_for
from app.jobs.prepare import build_prepared, multimode_setup
from app.jobs.robustness import oat_tasks
from app.models.four_mode import four_mode_scan, undepleted_population, undepleted_variance
from app.models.multimode import multimode_scan
from app.models.oat import oat_full_sequence
from app.models.oat_exact import exact_oat_sequence
from app.reporting.checkpoint import read_checkpoint, write_checkpoint
from app.reporting.run_report import write_run_outputs
from app.reporting.summary import compute_summary
from app.workflows.robustness import FrozenFWM, crossing_epsilon, robustness_scan

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class CheckResult:
    name: str
    passed: bool
    detail: dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0
    error: str = ""

    def as_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {"item": self.name, "status": "ok" if self.passed else "failed", **self.detail}
        if not self.passed:
            record["reason"] = self.error or "out_of_tolerance"
        return record


Check = Callable[[ExperimentConfig], dict[str, Any]]


def _expect(condition: bool, **detail: Any) -> dict[str, Any]:
    return {"passed": bool(condition), **detail}


# quick checks -------------------------------------------------------------------------


def check_undepleted(_: ExperimentConfig) -> dict[str, Any]:
    population = float(undepleted_population(1e3, 1.0))
    variance = float(undepleted_variance(1e3, 1.0))
    return _expect(
        math.isclose(population, 3763.4, rel_tol=1e-4) and math.isclose(variance, 0.266, abs_tol=1e-3),
        population=population,
        variance=variance,
    )


def check_time_scale(_: ExperimentConfig) -> dict[str, Any]:
    chi = DEFAULT_NT_CHI / 2e5
    clocks = [DEFAULT_NT_CHI * t for t in (0.1e-3, 0.18e-3)]
    return _expect(
        math.isclose(chi, 0.134, rel_tol=1e-3)
        and math.isclose(clocks[0], 2.68, abs_tol=1e-2)
        and math.isclose(clocks[1], 4.82, abs_tol=1e-2),
        chi=chi,
        clocks=clocks,
    )


def check_coherent_variance(config: ExperimentConfig) -> dict[str, Any]:
    scan = four_mode_scan(
        np.array([0.0]),
        2000,
        params=config.four_mode_params(),
        seeds=config.seeds,
        dt=config.four_mode.dt,
        rng_seed=config.rng_seed,
        chunk_size=config.chunk_size,
    )
    v = float(scan.v["aR_bL"][0])
    return _expect(abs(v - 1.0) < 0.15, v_aR_bL=v)


def check_shot_noise_control(config: ExperimentConfig) -> dict[str, Any]:
    control = replace(
        config,
        model="fourmode",
        n_traj=2000,
        interferometer=replace(config.interferometer, apply_fwm=False),
    )
    _, sweep = prepare_sequence(build_prepared(control), control.phi2_grid())
    value = sweep.min_delta_phi_sqrt_nt
    # Relative standard error of a Gaussian sample variance.
    bound = 5.0 * math.sqrt(2.0 / control.n_traj)
    ratio = sweep.var_S / sweep.N_t
    worst = float(np.max(np.abs(ratio - 1.0)))
    return _expect(0.9 <= value <= 1.1 and worst <= bound, min_delta_phi_sqrtNt=value, worst_variance_ratio_error=worst)


def check_balance_root(_: ExperimentConfig) -> dict[str, Any]:
    thetas = (0.7, 2.1)
    coherences = np.zeros((2, 2, 2), dtype=np.complex128)
    for side, theta in enumerate(thetas):
        v = np.array([math.sqrt(3.0), math.sqrt(2.0) * np.exp(1j * theta)])
        coherences[side] = np.outer(v, v.conj())
    errors = []
    for side, theta in zip(("L", "R"), thetas):
        found = balance_phase(coherences, side).phi
        expected = (-theta) % math.pi
        errors.append(abs(math.remainder(found - expected, math.pi)))
    return _expect(max(errors) < 1e-4, errors=errors)


def check_oat_exact_agreement(config: ExperimentConfig) -> dict[str, Any]:
    N = 100
    chi = config.oat.chi_oat
    params = OATParams(chi_oat=chi, t_shear=1.0 / (chi * N), theta=0.8, N_t=float(N))
    phi_grid = 2.0 * math.pi * np.arange(128) / 128
    exact = exact_oat_sequence(N, params, phi_grid).min_delta_phi_sqrt_nt
    wigner = oat_full_sequence(float(N), params, phi_grid, n_traj=20000, seed=config.rng_seed).min_delta_phi_sqrt_nt
    return _expect(abs(wigner - exact) <= 0.15 * exact, exact=exact, wigner=wigner)


def check_checkpoint_round_trip(config: ExperimentConfig) -> dict[str, Any]:
    small = replace(config, model="fourmode", n_traj=16, t_fwm=min(config.t_fwm, 2e-5))
    prepared = build_prepared(small)
    with tempfile.TemporaryDirectory() as tmp:
        path = write_checkpoint(
            Path(tmp) / "roundtrip.ckpt",
            prepared,
            preparation_hash=small.preparation_hash(),
            seed=small.rng_seed,
        )
        loaded, _ = read_checkpoint(path, expected_hash=small.preparation_hash())
    return _expect(
        loaded.model == prepared.model and np.array_equal(loaded.coherences, prepared.coherences),
        n_traj=loaded.n_traj,
    )


def check_packet_separation(config: ExperimentConfig) -> dict[str, Any]:
    section = config.multimode
    velocity = constants.hbar * section.k0 / section.mass
    separation = velocity * section.t_separation
    return _expect(abs(separation - 0.83e-3) < 0.02e-3, separation_m=separation)


QUICK_CHECKS: dict[str, Check] = {
    "undepleted_oracle": check_undepleted,
    "time_scale": check_time_scale,
    "coherent_variance": check_coherent_variance,
    "shot_noise_control": check_shot_noise_control,
    "balance_root": check_balance_root,
    "oat_exact_agreement": check_oat_exact_agreement,
    "checkpoint_round_trip": check_checkpoint_round_trip,
    "packet_separation": check_packet_separation,
}


# acceptance checks ----------------------------------------------------------------------


def accept_four_mode_scan(config: ExperimentConfig) -> dict[str, Any]:
    times = np.linspace(0.0, 0.5e-3, 51)
    scan = four_mode_scan(
        times,
        config.n_traj,
        params=config.four_mode_params(),
        seeds=config.seeds,
        dt=config.four_mode.dt,
        rng_seed=config.rng_seed,
        threads=config.threads,
        chunk_size=config.chunk_size,
        nt_chi=config.nt_chi,
    )
    v_min, at = scan.minimum("aR_bL")
    return _expect(0.005 <= v_min <= 0.02 and 8.0 <= at <= 12.0, v_min=v_min, nt_chi_t=at)


def accept_multimode_scan(config: ExperimentConfig) -> dict[str, Any]:
    times = np.linspace(0.0, 0.25e-3, 26)
    multimode, _ = multimode_scan(
        times,
        config.n_traj,
        setup=multimode_setup(config),
        rng_seed=config.rng_seed,
        threads=config.threads,
        chunk_size=config.multimode.chunk_size,
        nt_chi=config.nt_chi,
    )
    four_mode = four_mode_scan(
        times,
        config.n_traj,
        params=config.four_mode_params(),
        seeds=config.seeds,
        dt=config.four_mode.dt,
        rng_seed=config.rng_seed,
        threads=config.threads,
        chunk_size=config.chunk_size,
        nt_chi=config.nt_chi,
    )
    v_min, at = multimode.minimum("aR_bL")
    early = (multimode.nt_chi_t <= 2.0) & np.isfinite(multimode.v["aR_bL"]) & np.isfinite(four_mode.v["aR_bL"])
    spread = np.abs(multimode.v["aR_bL"][early] / four_mode.v["aR_bL"][early] - 1.0)
    worst = float(spread.max()) if spread.size else float("nan")
    return _expect(
        0.05 <= v_min <= 0.2 and 3.5 <= at <= 5.5 and worst <= 0.1,
        v_min=v_min,
        nt_chi_t=at,
        early_four_mode_disagreement=worst,
    )


def accept_four_mode_interferometer(config: ExperimentConfig) -> dict[str, Any]:
    four_mode = replace(config, model="fourmode")
    _, sweep = prepare_sequence(build_prepared(four_mode), four_mode.phi2_grid())
    return _expect(
        sweep.min_delta_phi_sqrt_nt < 1.0 and sweep.visibility > 0.99,
        min_delta_phi_sqrtNt=sweep.min_delta_phi_sqrt_nt,
        visibility=sweep.visibility,
    )


def accept_multimode_interferometer(config: ExperimentConfig) -> dict[str, Any]:
    multimode = replace(config, model="multimode1d", t_fwm=0.12e-3)
    _, sweep = prepare_sequence(build_prepared(multimode), multimode.phi2_grid())
    return _expect(
        0.35 <= sweep.min_delta_phi_sqrt_nt <= 0.55 and 0.90 <= sweep.visibility <= 0.96,
        min_delta_phi_sqrtNt=sweep.min_delta_phi_sqrt_nt,
        visibility=sweep.visibility,
    )


def accept_oat_robustness(config: ExperimentConfig) -> dict[str, Any]:
    crossings = {}
    for label, epsilons, frozen in oat_tasks(config):
        crossings[label] = crossing_epsilon(robustness_scan(frozen.scheme, epsilons, frozen))
    values = list(crossings.values())
    passed = (
        len(values) == 2
        and values[0] is not None
        and 0.005 <= values[0] <= 0.02
        and values[1] is not None
        and 0.2 <= values[1] <= 0.5
    )
    return _expect(passed, crossings=crossings)


def accept_fwm_robustness(config: ExperimentConfig) -> dict[str, Any]:
    four_mode = replace(config, model="fourmode")
    seq, _ = prepare_sequence(build_prepared(four_mode), four_mode.phi2_grid())
    frozen = FrozenFWM(
        params=config.four_mode_params(),
        seeds=config.seeds,
        seq=seq,
        dt=config.four_mode.dt,
        t_fwm=config.t_fwm,
        n_traj=config.n_traj,
        seed=config.rng_seed,
        phi2_grid=config.phi2_grid(),
        threads=config.threads,
        chunk_size=config.chunk_size,
    )
    value = frozen.evaluate(0.5).frozen_delta_phi_sqrt_nt
    return _expect(value < 1.0, frozen_delta_phi_sqrtNt=value)


ACCEPTANCE_CHECKS: dict[str, Check] = {
    "four_mode_scan": accept_four_mode_scan,
    "multimode_scan": accept_multimode_scan,
    "four_mode_interferometer": accept_four_mode_interferometer,
    "multimode_interferometer": accept_multimode_interferometer,
    "oat_robustness": accept_oat_robustness,
    "fwm_robustness": accept_fwm_robustness,
}


def run_checks(config: ExperimentConfig, checks: dict[str, Check]) -> list[CheckResult]:
    results = []
    for name, check in checks.items():
        started = time.monotonic()
        try:
            outcome = check(config)
            passed = bool(outcome.pop("passed"))
            result = CheckResult(name, passed, outcome)
        except Exception as exc:  # broad so one broken check still reports the rest
            logger.exception("Check %s raised", name)
            result = CheckResult(name, False, error=f"{getattr(exc, 'code', type(exc).__name__)}: {exc}")
        result.seconds = round(time.monotonic() - started, 3)
        logger.info("Check %s: %s (%.1fs)", name, "pass" if result.passed else "FAIL", result.seconds)
        results.append(result)
    return results


def run(*, config: ExperimentConfig, acceptance: bool = False, artifacts_dir: str | None = None) -> dict[str, Any]:
    checks = dict(QUICK_CHECKS)
    if acceptance:
        checks.update(ACCEPTANCE_CHECKS)
    results = run_checks(config, checks)
    records = [result.as_record() for result in results]
    failed = [result.name for result in results if not result.passed]
    json_path, md_path = write_run_outputs(
        artifacts_dir=resolve_artifacts_dir(config, artifacts_dir),
        command="selftest",
        run_id=run_id_for("selftest", config),
        summary=compute_summary(records, total_items=len(records)),
        records=records,
        findings=[f"check failed: {name}" for name in failed],
        headline={"checks": len(results), "failed": len(failed), "acceptance": acceptance},
    )
    return {
        "passed": not failed,
        "checks": {result.name: result.passed for result in results},
        "failed_checks": failed,
        "summary_json": str(json_path),
        "report_md": str(md_path),
    }


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Run oracle checks (and acceptance runs with --acceptance).")
    add_common_arguments(parser)
    parser.add_argument("--acceptance", action="store_true", help="Also run the full-scale acceptance checks.")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    outcome: dict[str, Any] = {}

    def _run(config: ExperimentConfig) -> dict[str, Any]:
        outcome.update(run(config=config, acceptance=args.acceptance, artifacts_dir=args.output_dir))
        return outcome

    code = execute("selftest", args, _run)
    if code == 0 and not outcome.get("passed", False):
        return 1
    return code


if __name__ == "__main__":
    raise SystemExit(main())
