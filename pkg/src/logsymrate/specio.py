"""JSON documents: model specs, truth specs, and fit serialization.

Spec files are plain JSON with stable field names (no formula language).
Serialization is deterministic: dictionaries are written in construction
order, floats with 17 significant digits, NaN and infinities as null.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, SpecificationError
from .logsym_family import GeneratorSpec
from .logsym_fit import LogSymFit, ModelSpec, SubmodelSpec
from .poisson_glm import PoissonFit
from .spline_bases import SplineTerm
from .synthetic import TruthSpec


# ---------------------------------------------------------------------------
# deterministic JSON writer

def _write_value(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            out.append("null")
        else:
            out.append(format(x, ".17g"))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(k)))
            out.append(":")
            _write_value(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        for i, v in enumerate(seq):
            if i:
                out.append(",")
            _write_value(v, out)
        out.append("]")
    else:
        raise SpecificationError(f"cannot serialize {type(obj).__name__} to JSON")


def dump_json(obj) -> str:
    out: list = []
    _write_value(obj, out)
    return "".join(out) + "\n"


def load_json(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc}") from None


# ---------------------------------------------------------------------------
# model specs

@dataclass(frozen=True)
class PoissonSpec:
    """Declarative Poisson model: covariate list plus zero policy."""

    covariates: tuple = ("intercept", "age", "period")
    zero_policy: str = "add_half"


def _check_keys(doc: dict, allowed, what: str) -> None:
    extras = sorted(set(doc) - set(allowed))
    if extras:
        raise SpecificationError(f"unknown key(s) in {what}: {', '.join(extras)}")


def _parse_family(doc) -> GeneratorSpec:
    if not isinstance(doc, dict) or "name" not in doc:
        raise SpecificationError('family must be an object with a "name"')
    name = doc["name"]
    _check_keys(doc, {"name", "nu", "zeta", "nu1", "nu2"}, "family")
    return GeneratorSpec(family=name, nu=doc.get("nu"), zeta=doc.get("zeta"),
                         nu1=doc.get("nu1"), nu2=doc.get("nu2"))


def _family_to_dict(gen: GeneratorSpec) -> dict:
    out = {"name": gen.family}
    if gen.family == "student":
        out["nu"] = gen.nu
    elif gen.family == "powerexp":
        out["zeta"] = gen.zeta
    elif gen.family == "contnormal":
        out["nu1"] = gen.nu1
        out["nu2"] = gen.nu2
    return out


def _parse_term(doc) -> SplineTerm:
    _check_keys(doc, {"kind", "covariate", "lambda", "basis_dim", "diff_order"}, "term")
    for key in ("kind", "covariate"):
        if key not in doc:
            raise SpecificationError(f"term is missing {key!r}")
    lam = doc.get("lambda", "select")
    if lam == "select":
        lam = None
    elif not isinstance(lam, (int, float)) or isinstance(lam, bool):
        raise SpecificationError(f'term lambda must be a number or "select", got {lam!r}')
    kwargs = {}
    if "basis_dim" in doc:
        kwargs["basis_dim"] = int(doc["basis_dim"])
    if "diff_order" in doc:
        kwargs["diff_order"] = int(doc["diff_order"])
    return SplineTerm(kind=doc["kind"], covariate=doc["covariate"],
                      lam=None if lam is None else float(lam), **kwargs)


def _term_to_dict(term: SplineTerm) -> dict:
    out = {"kind": term.kind, "covariate": term.covariate,
           "lambda": "select" if term.lam is None else term.lam}
    if term.kind == "psp":
        out["basis_dim"] = term.basis_dim
        out["diff_order"] = term.diff_order
    return out


def _parse_submodel(doc, name: str) -> SubmodelSpec:
    if not isinstance(doc, dict):
        raise SpecificationError(f"{name} submodel must be an object")
    _check_keys(doc, {"covariates", "terms", "use_offset"}, f"{name} submodel")
    return SubmodelSpec(
        covariates=tuple(doc.get("covariates", ("intercept",))),
        terms=tuple(_parse_term(t) for t in doc.get("terms", [])),
        use_offset=bool(doc.get("use_offset", False)),
    )


def _submodel_to_dict(sub: SubmodelSpec) -> dict:
    return {
        "covariates": list(sub.covariates),
        "terms": [_term_to_dict(t) for t in sub.terms],
        "use_offset": sub.use_offset,
    }


def parse_model_spec(doc):
    """Parse a model-spec document into ModelSpec or PoissonSpec."""
    if not isinstance(doc, dict):
        raise SpecificationError("model spec must be a JSON object")
    model = doc.get("model")
    if model == "poisson":
        _check_keys(doc, {"model", "covariates", "zero_policy"}, "poisson spec")
        return PoissonSpec(
            covariates=tuple(doc.get("covariates", ("intercept", "age", "period"))),
            zero_policy=doc.get("zero_policy", "add_half"),
        )
    if model != "logsym":
        raise SpecificationError(f'model must be "logsym" or "poisson", got {model!r}')
    _check_keys(doc, {"model", "family", "location", "dispersion", "zero_policy",
                      "jacobian_adjust", "convergence", "lambda_grid"}, "logsym spec")
    if "family" not in doc or "location" not in doc:
        raise SpecificationError("logsym spec needs family and location")
    kwargs = {}
    conv = doc.get("convergence", {})
    _check_keys(conv, {"tol_loglik", "tol_param", "max_outer", "max_halvings"},
                "convergence")
    if "tol_loglik" in conv:
        kwargs["tol_loglik"] = float(conv["tol_loglik"])
    if "tol_param" in conv:
        kwargs["tol_param"] = float(conv["tol_param"])
    if "max_outer" in conv:
        kwargs["max_outer"] = int(conv["max_outer"])
    if "max_halvings" in conv:
        kwargs["max_halvings"] = int(conv["max_halvings"])
    if "lambda_grid" in doc:
        grid = doc["lambda_grid"]
        if isinstance(grid, dict):
            _check_keys(grid, {"lo", "hi", "num"}, "lambda_grid")
            kwargs["lambda_grid"] = tuple(np.geomspace(
                float(grid["lo"]), float(grid["hi"]), int(grid["num"])))
        else:
            kwargs["lambda_grid"] = tuple(float(v) for v in grid)
    return ModelSpec(
        generator=_parse_family(doc["family"]),
        location=_parse_submodel(doc["location"], "location"),
        dispersion=_parse_submodel(doc.get("dispersion", {}), "dispersion"),
        zero_policy=doc.get("zero_policy", "add_half"),
        jacobian_adjust=bool(doc.get("jacobian_adjust", False)),
        **kwargs,
    )


def model_spec_to_dict(spec) -> dict:
    if isinstance(spec, PoissonSpec):
        return {"model": "poisson", "covariates": list(spec.covariates),
                "zero_policy": spec.zero_policy}
    return {
        "model": "logsym",
        "family": _family_to_dict(spec.generator),
        "location": _submodel_to_dict(spec.location),
        "dispersion": _submodel_to_dict(spec.dispersion),
        "zero_policy": spec.zero_policy,
        "jacobian_adjust": spec.jacobian_adjust,
        "convergence": {
            "tol_loglik": spec.tol_loglik, "tol_param": spec.tol_param,
            "max_outer": spec.max_outer, "max_halvings": spec.max_halvings,
        },
        "lambda_grid": list(spec.lambda_grid),
    }


# ---------------------------------------------------------------------------
# truth specs

def _parse_grid(doc, what: str) -> tuple:
    if isinstance(doc, dict):
        _check_keys(doc, {"min", "max", "count"}, what)
        return tuple(np.linspace(float(doc["min"]), float(doc["max"]),
                                 int(doc["count"])))
    return tuple(float(v) for v in doc)


def _tabulated(doc, what: str):
    _check_keys(doc, {"x", "y"}, what)
    x = np.asarray(doc["x"], dtype=float)
    y = np.asarray(doc["y"], dtype=float)
    if x.ndim != 1 or x.shape != y.shape or len(x) < 2:
        raise SpecificationError(f"{what} needs matching x and y vectors (length >= 2)")
    if np.any(np.diff(x) <= 0):
        raise SpecificationError(f"{what} x values must be strictly increasing")

    def f(v, _x=x, _y=y):
        return float(np.interp(v, _x, _y))

    return f


def parse_truth_spec(doc) -> TruthSpec:
    if not isinstance(doc, dict):
        raise SpecificationError("truth spec must be a JSON object")
    _check_keys(doc, {"ages", "periods", "log_rate", "population", "noise",
                      "sex", "site"}, "truth spec")
    for key in ("ages", "periods", "log_rate", "noise"):
        if key not in doc:
            raise SpecificationError(f"truth spec is missing {key!r}")
    lr = doc["log_rate"]
    _check_keys(lr, {"beta0", "beta_age", "beta_period", "f_age", "f_period"},
                "log_rate")
    noise = doc["noise"]
    _check_keys(noise, {"kind", "family", "phi", "round_counts"}, "noise")
    kind = noise.get("kind")
    kwargs = {}
    if kind == "logsym":
        if "family" not in noise:
            raise SpecificationError("logsym noise needs a family")
        kwargs["generator"] = _parse_family(noise["family"])
        phi = noise.get("phi", 0.05)
        kwargs["phi"] = _tabulated_age_fn(phi) if isinstance(phi, dict) else float(phi)
        kwargs["round_counts"] = bool(noise.get("round_counts", False))
    pop = doc.get("population", 1e5)
    if isinstance(pop, list):
        pop = tuple(tuple(float(v) for v in row) for row in pop)
    else:
        pop = float(pop)
    return TruthSpec(
        ages=_parse_grid(doc["ages"], "ages"),
        periods=_parse_grid(doc["periods"], "periods"),
        beta0=float(lr.get("beta0", 0.0)),
        beta_age=float(lr.get("beta_age", 0.0)),
        beta_period=float(lr.get("beta_period", 0.0)),
        f_age=_tabulated(lr["f_age"], "f_age") if "f_age" in lr else None,
        f_period=_tabulated(lr["f_period"], "f_period") if "f_period" in lr else None,
        population=pop,
        noise=kind if kind is not None else "",
        sex=doc.get("sex", "female"),
        site=doc.get("site", "synthetic"),
        **kwargs,
    )


def _tabulated_age_fn(doc):
    base = _tabulated(doc, "phi")

    def f(a, p, _base=base):
        return _base(a)

    return f


# ---------------------------------------------------------------------------
# fit serialization

def fit_to_dict(fit_result) -> dict:
    if isinstance(fit_result, PoissonFit):
        return {
            "model": "poisson",
            "converged": fit_result.converged,
            "iterations": fit_result.iterations,
            "loglik": fit_result.loglik,
            "deviance": fit_result.deviance,
            "aic": fit_result.aic,
            "beta": {
                "names": list(fit_result.covariates),
                "estimates": fit_result.beta,
                "std_errs": fit_result.se,
            },
            "cov": fit_result.cov,
            "mu_hat": fit_result.mu_hat,
            "n_cells": len(fit_result.mu_hat),
        }
    if isinstance(fit_result, LogSymFit):
        return {
            "model": "logsym",
            "converged": fit_result.converged,
            "iterations": fit_result.iterations,
            "grad_norm": fit_result.grad_norm,
            "loglik": fit_result.loglik,
            "aic": fit_result.aic,
            "aic_jacobian": fit_result.aic_jacobian,
            "beta": {
                "names": list(fit_result.beta_names),
                "estimates": fit_result.beta,
                "std_errs": fit_result.beta_se,
            },
            "gamma": {
                "names": list(fit_result.gamma_names),
                "estimates": fit_result.gamma,
                "std_errs": fit_result.gamma_se,
            },
            "terms": {
                label: {
                    "lambda": fit_result.lam[label],
                    "edf": fit_result.edf[label],
                    "coefficients": fit_result.spline_coefs[label],
                }
                for label in fit_result.lam
            },
            "mu_hat": fit_result.mu_hat,
            "phi_hat": fit_result.phi_hat,
            "trace": list(fit_result.trace),
            "n_cells": len(fit_result.mu_hat),
            "spec": model_spec_to_dict(fit_result.spec),
        }
    raise SpecificationError(f"cannot serialize fit of type {type(fit_result).__name__}")
