"""Command-line front door.

Subcommands mirror the module map: profile dumps, chart diagnostics, the
sharp-interface tracker, approximate-solution builds and residuals, the
phase-field runs, the spectral probe, and the convergence harness.
"""

import os
import sys

import click
import numpy as np

from . import expansion as ex
from . import geometry as geo
from . import harness
from . import io as wio
from . import pde
from . import profiles as pr
from . import sharp
from . import spectral as sc


def _parse_interface(spec):
    return harness._parse_interface(spec)


@click.group()
def main():
    """Phase-field Willmore flow laboratory."""


# -- profiles ----------------------------------------------------------

@main.group()
def profiles():
    """Layer profiles in the stretched variable."""


@profiles.command("dump")
@click.option("--grid", "n", default=2001, show_default=True)
@click.option("--window", "window", default=20.0, show_default=True)
@click.option("--out", "out", required=True, type=click.Path())
def profiles_dump(n, window, out):
    """CSV of z, theta, theta_p, alpha, gamma1, gamma2, gamma3, eta, eta_p."""
    if n % 2 == 0:
        n += 1
    z = pr.make_z_grid(window, n)
    alpha = pr.alpha_profile(z)
    g1, g2, g3 = pr.gamma_profiles(z)
    cols = np.column_stack([
        z,
        pr.theta_profile(z, 0),
        pr.theta_profile(z, 1),
        alpha.values,
        g1.values,
        g2.values,
        g3.values,
        pr.eta_bump(z, 0),
        pr.eta_bump(z, 1),
    ])
    with open(out, "w") as fh:
        fh.write("z,theta,theta_p,alpha,gamma1,gamma2,gamma3,eta,eta_p\n")
        np.savetxt(fh, cols, delimiter=",", fmt="%.12e")
    click.echo(f"wrote {out} ({n} rows)")


# -- geometry ----------------------------------------------------------

@main.group()
def geometry():
    """Interfaces and tubular charts."""


@geometry.command("chart")
@click.option("--spec", "spec", default="circle:1.0", show_default=True)
@click.option("--delta", "delta", default=0.4, show_default=True)
@click.option("--nodes", "nodes", default=64, show_default=True)
def geometry_chart(spec, delta, nodes):
    """Dump h, b, a per node for the chart of the given interface."""
    family = _parse_interface(spec)
    chart = family.chart_at(0.0, delta)
    if chart.kind == "sphere":
        click.echo("s,h,b,a")
        click.echo(f"0,{chart.h_coefficient():.12e},"
                   f"{chart.b_coefficient():.12e},{chart.a_coefficient():.12e}")
        return
    curve = geo.ClosedCurve.circle(chart.radius, nodes) \
        if chart.kind == "circle" else chart.interface
    s = curve.arclength_params
    h = chart.h_coefficient(s)
    b = chart.b_coefficient(s)
    a = chart.a_coefficient(s)
    click.echo("s,h,b,a")
    for row in zip(s, np.broadcast_to(h, s.shape), np.broadcast_to(b, s.shape),
                   np.broadcast_to(a, s.shape)):
        click.echo(",".join(f"{v:.12e}" for v in row))


# -- sharp-interface tracker -------------------------------------------

@main.group(name="sharp")
def sharp_group():
    """Front-tracked Willmore flow."""


@sharp_group.command("run")
@click.option("--spec", "spec", default="circle:1.0", show_default=True)
@click.option("--t-end", "t_end", default=0.1, show_default=True)
@click.option("--dt", "dt", default=1e-4, show_default=True)
@click.option("--nodes", "nodes", default=256, show_default=True)
@click.option("--out", "out", required=True, type=click.Path())
def sharp_run(spec, t_end, dt, nodes, out):
    """Track the curve and emit time, bending energy, and nodes per frame."""
    family = _parse_interface(spec)
    if family.dim != 2:
        raise click.UsageError("the tracker handles planar curves")
    curve = geo.ClosedCurve.circle(family.R0, nodes)
    state = sharp.WillmoreState(curve, 0.0)
    steps = max(1, int(round(t_end / dt)))
    frames = 20
    per_frame = max(1, steps // frames)
    with open(out, "w") as fh:
        fh.write("# t,bending_energy,x0,y0,x1,y1,...\n")
        done = 0
        while done < steps:
            k = min(per_frame, steps - done)
            state = sharp.evolve_front(state, dt, k)
            done += k
            nodesflat = ",".join(f"{v:.10e}" for v in state.curve.nodes.ravel())
            fh.write(f"{state.time:.10e},{sharp.bending_energy(state.curve):.10e},"
                     f"{nodesflat}\n")
    click.echo(f"wrote {out}")


# -- expansion ----------------------------------------------------------

@main.group()
def expand():
    """Matched-asymptotic approximate solutions."""


def _build(spec, eps, k, grid, extent, delta):
    family = _parse_interface(spec)
    dom = geo.GridDomain(extent, grid)
    hier = ex.DistanceHierarchy(family, 0.0, delta, k)
    coeffs = ex.ExpansionCoefficients(hier)
    approx = ex.build_approximate(hier, coeffs, eps, dom)
    return approx, hier, dom


@expand.command("build")
@click.option("--spec", "spec", default="circle:1.0", show_default=True)
@click.option("--eps", "eps", default=0.05, show_default=True)
@click.option("--k", "k", default=2, show_default=True)
@click.option("--grid", "grid", default=512, show_default=True)
@click.option("--extent", "extent", default=4.0, show_default=True)
@click.option("--delta", "delta", default=0.8, show_default=True)
@click.option("--out", "out", required=True, type=click.Path())
def expand_build(spec, eps, k, grid, extent, delta, out):
    """Write phi_a and mu_a as flat binary snapshots (<out>.phi / <out>.mu)."""
    approx, hier, dom = _build(spec, eps, k, grid, extent, delta)
    extra = f"delta={delta:g} k={k}"
    wio.write_field(out + ".phi", approx.phi_a, extent, eps, 0.0, extra)
    wio.write_field(out + ".mu", approx.mu_a, extent, eps, 0.0, extra)
    click.echo(f"wrote {out}.phi and {out}.mu")


@expand.command("residual")
@click.option("--spec", "spec", default="circle:1.0", show_default=True)
@click.option("--eps", "eps", default=0.05, show_default=True)
@click.option("--k", "k", default=2, show_default=True)
@click.option("--grid", "grid", default=512, show_default=True)
@click.option("--extent", "extent", default=4.0, show_default=True)
@click.option("--delta", "delta", default=0.8, show_default=True)
def expand_residual(spec, eps, k, grid, extent, delta):
    """One-line CSV: eps, k, r1_sup, r1_l2, r2_sup, r2_l2."""
    approx, hier, dom = _build(spec, eps, k, grid, extent, delta)
    rep = ex.residual(approx, hier)
    click.echo("eps,k,r1_sup,r1_l2,r2_sup,r2_l2")
    click.echo(f"{eps:g},{k},{rep.r1_sup:.12e},{rep.r1_l2:.12e},"
               f"{rep.r2_sup:.12e},{rep.r2_l2:.12e}")


# -- phase-field runs ----------------------------------------------------

@main.command("pf")
@click.argument("action", type=click.Choice(["run"]))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def pf(action, config_path):
    """Run the phase-field solver from a flat key=value config."""
    keys = harness.parse_kv_config(config_path)
    L = float(keys.get("L", 4.0))
    n = int(keys.get("n", 512))
    eps = float(keys.get("eps", 0.05))
    t_end = float(keys.get("t_end", 0.01))
    dt = float(keys["dt"]) if "dt" in keys else None
    scheme = keys.get("scheme", "imex")
    S = float(keys["S"]) if "S" in keys else None
    init = keys.get("init", "approx:circle:1.0:2")
    sample_every = int(keys.get("sample_every", 500))
    out_prefix = keys.get("out_prefix", "pf_run")

    dom = geo.GridDomain(L, n)
    if init.startswith("approx:"):
        _, kind, R0, k = init.split(":")
        delta = float(keys.get("delta", 0.8))
        family = _parse_interface(f"{kind}:{R0}")
        hier = ex.DistanceHierarchy(family, 0.0, delta, int(k))
        coeffs = ex.ExpansionCoefficients(hier)
        approx = ex.build_approximate(hier, coeffs, eps, dom)
        state = pde.PhaseFieldState(approx.phi_a, approx.mu_a, 0.0, eps)
    elif init == "stripe":
        state = pde.stripe_initial(dom, eps)
    elif init.startswith("file:"):
        values, meta = wio.read_field(init[5:])
        state = pde.PhaseFieldState(values, pde.mu_of_phi(values, eps, dom),
                                    meta["t"], eps)
    else:
        raise click.UsageError(f"unknown init {init!r}")

    cfg = pde.SolverConfig(domain=dom, epsilon=eps, dt=dt, t_end=t_end,
                           stabilization=S, scheme=scheme,
                           sample_every=sample_every)
    final, trace = pde.run(cfg, state)
    trace_path = out_prefix + "_trace.csv"
    with open(trace_path, "w") as fh:
        fh.write("t,E,max_phi,radius\n")
        for row in zip(trace.times, trace.energies, trace.max_phi, trace.radius):
            fh.write(",".join(f"{v:.12e}" for v in row) + "\n")
    wio.write_field(out_prefix + "_final.phi", final.phi, L, eps, final.time)
    click.echo(f"wrote {trace_path} and {out_prefix}_final.phi "
               f"(dissipation violations: {trace.dissipation_violations})")


# -- spectral probe ------------------------------------------------------

@main.command("spectral")
@click.argument("action", type=click.Choice(["probe"]))
@click.option("--spec", "spec", default="circle:1.0", show_default=True)
@click.option("--eps", "eps_list", default="0.1,0.05", show_default=True)
@click.option("--delta", "delta", default=0.8, show_default=True)
@click.option("--out", "out", required=True, type=click.Path())
def spectral_probe(action, spec, eps_list, delta, out):
    """Sweep the smallest eigenvalue and the K-ratio across eps."""
    eps_values = tuple(float(x) for x in eps_list.split(","))
    cfg = harness.ExperimentConfig(kind="spectral_sweep", interface=spec,
                                   eps_list=eps_values, delta=delta)
    report = harness.run_experiment(cfg)
    with open(out, "w") as fh:
        fh.write(harness.report_to_csv(report))
    click.echo(f"wrote {out} (passed={report.passed})")


# -- convergence harness --------------------------------------------------

@main.command("converge")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def converge(config_path):
    """Run an experiment config; exit 0 pass, 1 fail, 2 execution error."""
    try:
        cfg = harness.ExperimentConfig.from_file(config_path)
        report = harness.run_experiment(cfg)
        os.makedirs(cfg.out_dir, exist_ok=True)
        csv_path = os.path.join(cfg.out_dir, f"{cfg.kind}.csv")
        with open(csv_path, "w") as fh:
            fh.write(harness.report_to_csv(report))
        harness.emit_plots(report, cfg.out_dir)
        verdict = "PASS" if report.passed else "FAIL"
        click.echo(f"{verdict} {cfg.kind}: fitted order = {report.fitted_order:.4f} "
                   f"(threshold {report.threshold}); report at {csv_path}")
    except Exception as err:  # noqa: BLE001 - exit-code contract
        click.echo(f"execution error: {err}", err=True)
        sys.exit(2)
    sys.exit(0 if report.passed else 1)


if __name__ == "__main__":
    main()
