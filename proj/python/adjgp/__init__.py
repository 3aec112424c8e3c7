"""Adjoint-method inference of GP forcing functions."""

import json

from ._core import (
    ConfigError,
    DomainError,
    Error,
    NumericalError,
    SolverError,
    StructuralError,
    cfl_limit,
    config_hash,
    config_text,
    eq_kernel,
    infer_config,
    inner_product,
    kernel_approx,
    ml_estimate,
    ode_adjoint,
    ode_forward,
    pde_adjoint,
    pde_forward,
    posterior,
    rff_features,
    shift_adjoint,
    shift_forward,
)
from ._core import run_command as _run_command


def run(command, config="", out="", jobs=1, seed=None, slice_t=None):
    """Run a CLI subcommand in-process and return its manifest as a dict."""
    return json.loads(_run_command(command, config, out, jobs, seed, slice_t))


def simulate(config, out, **kw):
    return run("simulate", config, out, **kw)


def infer(config, out, **kw):
    return run("infer", config, out, **kw)


def mcmc(config, out, **kw):
    return run("mcmc", config, out, **kw)


def sweep(config, out, **kw):
    return run("sweep", config, out, **kw)


def scan_hyper(config, out, **kw):
    return run("scan-hyper", config, out, **kw)


def shift_demo(out, config="", **kw):
    return run("shift-demo", config, out, **kw)
