"""
Command-line front end.

    python main.py check    --config run.env
    python main.py atlas    --config run.env --rect 0,10,0,10 --res 200
    python main.py simulate --config run.env --out runs/sym
    python main.py energy   --config run.env --from runs/sym
    python main.py rate     --config run.env --from runs/sym --window 0.25,0.9
    python main.py compare-regions --config run.env

Exit codes: 0 success, 1 out of region / blowup / failed certification,
2 config or input errors. Every invocation writes manifest.json first.
"""
from __future__ import annotations

import argparse
import logging
import os
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import __version__
from core.config import ConfigError, RunConfig, config_hash, load_config
from core.lyapunov import (ENERGY_HEADER, EnergyError, dissipation_constants, energy_nonincreasing,
                           trajectory_energy, verify_decay)
from core.model import (ChiKind, ParameterError, bai_winkler_condition, check_theorem12,
                        check_theorem13, mizukami_condition, steady_state)
from core.output import (DIAGNOSTICS_NAME, RunManifest, read_diagnostics, read_trajectory, write_csv,
                         write_trajectory)
from core.rate import RATE_HEADER, certify
from core.region import (ConditionViolated, InclusionSearchFailed, RegionError, RegionParams, RegionPoint,
                         classify_case, closed_form_membership, derivative_checks, f_maximizer, f_of_q, g_maximizer,
                         in_region_bw, in_region_miz, in_region_new, interval_I, point_from_params,
                         q0_maximizer, select_q_delta, strict_inclusion_witness)
from core.solver import SolverBlowup, Trajectory, run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2

ATLAS_HEADER = ("s", "t", "in_bw", "in_miz", "in_new", "in_closed_form", "margin")
COMPARE_HEADER = ("case", "axis", "s", "t", "in_bw", "in_new", "margin", "q", "df_at_1", "dg_at_1")
DECAY_SLACK = 0.1
DECAY_PASS_FRACTION = 0.95


def _floats(text: str, count: int, flag: str) -> Tuple[float, ...]:
    try:
        values = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{flag} expects {count} comma-separated numbers, got {text!r}")
    if len(values) != count:
        raise argparse.ArgumentTypeError(f"{flag} expects {count} comma-separated numbers, got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chemostab",
        description="Stability regions, simulation and decay certification for two-species "
                    "chemotaxis-competition systems")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key=value run configuration")
        p.add_argument("--out", default=os.path.join("runs", name), help="output directory")
        p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        return p

    command("check", "region membership, witness and hypothesis verdicts")
    atlas = command("atlas", "membership CSV over an (s,t) rectangle")
    atlas.add_argument("--rect", default="0,10,0,10", type=lambda x: _floats(x, 4, "--rect"),
                       help="s0,s1,t0,t1")
    atlas.add_argument("--res", default=200, type=int, help="points per axis")
    command("simulate", "run the solver and write snapshots + diagnostics")
    energy = command("energy", "energy along a trajectory and the decay inequality")
    energy.add_argument("--from", dest="from_dir", help="reuse a simulate output directory")
    energy.add_argument("--slack", type=float, default=DECAY_SLACK)
    rate = command("rate", "fit exponential decay rates to the sup-norm distances")
    rate.add_argument("--from", dest="from_dir", help="reuse a simulate output directory")
    rate.add_argument("--window", default="0.25,0.9", type=lambda x: _floats(x, 2, "--window"),
                      help="fractions a,b of the total time")
    rate.add_argument("--threshold", type=float, default=0.1, help="minimum certified rate")
    command("compare-regions", "strict-inclusion witnesses and the q = 1 derivative test")
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _mark(flag: bool) -> str:
    return "✅" if flag else "❌"


def cmd_check(cfg: RunConfig, args: argparse.Namespace) -> int:
    p = cfg.model
    rp = RegionParams.from_model(p)
    pt = point_from_params(p)
    ss = steady_state(p)
    q_lo, q_hi = interval_I(rp)
    bw, miz, new = in_region_bw(rp, pt), in_region_miz(rp, pt), in_region_new(rp, pt)

    print(f"🧮 steady state  u*={ss.u_star:.10g}  v*={ss.v_star:.10g}  w*={ss.w_star:.10g}")
    print(f"📍 (s, t) = ({pt.s:.10g}, {pt.t:.10g});  I = ({q_lo:.6g}, {q_hi:.6g})")
    print(f"   {_mark(bw.inside)} Bai–Winkler region   margin {bw.margin:+.6g}")
    print(f"   {_mark(miz.inside)} Mizukami region      margin {miz.margin:+.6g}")
    print(f"   {_mark(new.inside)} improved region      margin {new.margin:+.6g} at q={new.q:.10g}")
    print(f"   {_mark(closed_form_membership(rp, pt))} closed-form membership")
    print(f"   parameter-level prior conditions: Bai–Winkler {_mark(bai_winkler_condition(p, p.M1, p.M2))}"
          f"  Mizukami {_mark(mizukami_condition(p, q0_maximizer(rp)))}")

    if cfg.sensitivity.kind is ChiKind.CONSTANT and min(cfg.sensitivity.coefficients) > 0:
        chi1, chi2 = cfg.sensitivity.coefficients
        t12 = check_theorem12(p, chi1, chi2, cfg.hypotheses.n, cfg.hypotheses.convex)
        slacks = ", ".join(f"{k}={v:+.4g}" for k, v in t12.slacks.items())
        print(f"📐 constant-sensitivity hypotheses: {t12.verdict.value} ({slacks})")
    h = cfg.hypotheses
    try:
        t13 = check_theorem13(cfg.sensitivity, p, h.eta, h.p_exp, h.c_chi, n=h.n)
        print(f"📐 signal-dependent hypotheses: {t13.verdict}"
              + (f" at {t13.first_violation}" if t13.first_violation else ""))
    except ParameterError as exc:
        print(f"⚠️ signal-dependent hypotheses not checked: {exc}")

    if not new.inside:
        print("🚨 outside the improved stability region")
        return EXIT_FAILED
    witness = select_q_delta(p)
    dc = dissipation_constants(p, witness)
    print(f"🔑 witness q={witness.q:.10g}  δ={witness.delta:.10g}  margin={witness.margin:.6g}")
    print(f"   ε1={dc.eps1:.6g}  ε2={dc.eps2:.6g}  ε={dc.eps:.6g}")
    return EXIT_OK


def _axis_points(lo: float, hi: float, res: int) -> np.ndarray:
    return np.array([lo]) if res == 1 else np.linspace(lo, hi, res)


def cmd_atlas(cfg: RunConfig, args: argparse.Namespace) -> int:
    rp = RegionParams.from_model(cfg.model)
    s0, s1, t0, t1 = args.rect
    path = os.path.join(args.out, "atlas.csv")
    if args.res < 0:
        raise ConfigError(f"--res must be nonnegative, got {args.res}")
    if min(s0, t0) < 0:
        raise ConfigError("--rect must lie in the quadrant s, t >= 0")

    def rows():
        if args.res == 0 or s1 < s0 or t1 < t0:
            return
        for s in _axis_points(s0, s1, args.res):
            for t in _axis_points(t0, t1, args.res):
                pt = RegionPoint(float(s), float(t))
                new = in_region_new(rp, pt)
                yield (float(s), float(t), in_region_bw(rp, pt).inside, in_region_miz(rp, pt).inside,
                       new.inside, closed_form_membership(rp, pt), new.margin)

    count = write_csv(path, ATLAS_HEADER, rows())
    print(f"🗺️ wrote {count} atlas points to {path}")
    return EXIT_OK


def _simulate(cfg: RunConfig) -> Trajectory:
    return run(cfg.model, cfg.sensitivity, cfg.grid, cfg.solver, cfg.init)


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    trajectory = _simulate(cfg)
    write_trajectory(args.out, trajectory)
    final = trajectory.final.diagnostics
    print(f"🏁 t={final.time:.6g} after {trajectory.steps} steps: "
          f"‖u-u*‖∞={final.du_inf:.3e} ‖v-v*‖∞={final.dv_inf:.3e} ‖w-w*‖∞={final.dw_inf:.3e}")
    print(f"   {len(trajectory.snapshots)} snapshots in {args.out}")
    return EXIT_OK


def _trajectory(cfg: RunConfig, args: argparse.Namespace) -> Trajectory:
    if args.from_dir:
        if not os.path.isfile(os.path.join(args.from_dir, DIAGNOSTICS_NAME)):
            raise ConfigError(f"no simulation output in {args.from_dir}")
        try:
            return read_trajectory(args.from_dir, cfg.grid)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read simulation output in {args.from_dir}: {exc}") from exc
    return _simulate(cfg)


def cmd_energy(cfg: RunConfig, args: argparse.Namespace) -> int:
    witness = select_q_delta(cfg.model)
    dc = dissipation_constants(cfg.model, witness)
    records = trajectory_energy(_trajectory(cfg, args), cfg.model, witness)
    path = os.path.join(args.out, "energy.csv")
    write_csv(path, ENERGY_HEADER, (r.row() for r in records))
    print(f"⚡ wrote {len(records)} energy records to {path}")

    mono = energy_nonincreasing(records)
    print(f"   {_mark(mono.nonincreasing)} E nonincreasing after the first 1% "
          f"({mono.violations} increases, worst {mono.worst_increase:.3g})")
    if len(records) < 3:
        print("⚠️ fewer than 3 samples; decay inequality not checked")
        return EXIT_FAILED
    report = verify_decay(records, dc, args.slack)
    ok = report.fraction_satisfied >= DECAY_PASS_FRACTION
    print(f"   {_mark(ok)} dE/dt <= -ε·D at {report.fraction_satisfied:.1%} of samples "
          f"(ε={dc.eps:.4g}, slack {args.slack:g}, worst {report.worst_violation:.3g})")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_rate(cfg: RunConfig, args: argparse.Namespace) -> int:
    if args.from_dir:
        path = os.path.join(args.from_dir, DIAGNOSTICS_NAME)
        if not os.path.isfile(path):
            raise ConfigError(f"no simulation output in {args.from_dir}")
        try:
            diagnostics = read_diagnostics(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
    else:
        diagnostics = _simulate(cfg).diagnostics()
    eps: Optional[float] = None
    try:
        eps = dissipation_constants(cfg.model, select_q_delta(cfg.model)).eps
    except (ConditionViolated, EnergyError):
        logger.info("no dissipation constant outside the region; rate reported alone")

    results = certify(diagnostics, args.threshold, tuple(args.window), eps)
    rows: List[Sequence] = []
    for name, cert in results.items():
        if cert.estimate is None:
            rows.append((name, None, None, None, None, None))
            print(f"   {_mark(cert.certified)} {name}: {cert.note}")
            continue
        rows.append(cert.estimate.row(name))
        ratio = f", ℓ/ε={cert.ratio_to_eps:.3g}" if cert.ratio_to_eps is not None else ""
        print(f"   {_mark(cert.certified)} {name}: ℓ={cert.estimate.ell:.6g} C={cert.estimate.C:.3g} "
              f"r²={cert.estimate.r2:.6f}{ratio} {cert.note}")
    path = os.path.join(args.out, "rate.csv")
    write_csv(path, RATE_HEADER, rows)
    return EXIT_OK if all(c.certified for c in results.values()) else EXIT_FAILED


def cmd_compare_regions(cfg: RunConfig, args: argparse.Namespace) -> int:
    rp = RegionParams.from_model(cfg.model)
    case = classify_case(rp)
    deriv = derivative_checks(rp)
    q_f, f_best = f_maximizer(rp)
    q_g, g_best = g_maximizer(rp)
    f1 = f_of_q(rp, 1.0)
    print(f"🔍 {case}: f(1)={f1:.10g}  max f={f_best:.10g} at q={q_f:.6g}  max g={g_best:.10g} at q={q_g:.6g}")
    print(f"   f'(1)={deriv.df_at_1:+.6g} (typeset {deriv.df_printed:+.6g})  "
          f"g'(1)={deriv.dg_at_1:+.6g} (typeset {deriv.dg_printed:+.6g})")
    pt = strict_inclusion_witness(rp)
    new = in_region_new(rp, pt)
    axis = "s" if pt.t == 0 else "t"
    print(f"   ✅ ({pt.s:.10g}, {pt.t:.10g}) is in the improved region (margin {new.margin:.6g}, q={new.q:.6g}) "
          f"but not in the Bai–Winkler region")
    path = os.path.join(args.out, "compare_regions.csv")
    write_csv(path, COMPARE_HEADER, [(case, axis, pt.s, pt.t, in_region_bw(rp, pt).inside, new.inside,
                                      new.margin, new.q, deriv.df_at_1, deriv.dg_at_1)])
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "check": cmd_check,
    "atlas": cmd_atlas,
    "simulate": cmd_simulate,
    "energy": cmd_energy,
    "rate": cmd_rate,
    "compare-regions": cmd_compare_regions,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    manifest = RunManifest(
        config_path=os.path.abspath(args.config), command=args.command, out_dir=args.out,
        version=__version__,
        config_hash=config_hash(args.config) if os.path.isfile(args.config) else None,
        started_at=time.time(),
    )
    manifest.save()
    try:
        cfg = load_config(args.config)
        code = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"🚨 config error: {exc}")
        code = EXIT_INPUT
    except (ParameterError, RegionError) as exc:
        print(f"🚨 invalid parameters: {exc}")
        code = EXIT_INPUT
    except (ConditionViolated, EnergyError) as exc:
        print(f"🚨 {exc}")
        code = EXIT_FAILED
    except SolverBlowup as exc:
        print(f"🚨 solver blowup at step {exc.step}: {exc}")
        code = EXIT_FAILED
    except InclusionSearchFailed as exc:
        print(f"🚨 {exc}")
        code = EXIT_FAILED
    manifest.finish()
    return code
