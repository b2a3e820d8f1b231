"""CodeGen agent: emits a deployable controller source file plus a
machine-readable certificate manifest, and re-verifies the pair against the
plant to close the certificate loop."""

from __future__ import annotations

import hashlib
import json
import re
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, sdp
from .analysis import eigvals, hinf_norm
from .model import PlantModel
from .synthesis import assemble_decay, assemble_psi

MANIFEST_SCHEMA_VERSION = 1
# Relative mismatch allowed between manifest K and Y P^-1.
K_CONSISTENCY_TOL = 1e-6


class CodegenError(RuntimeError):
    """Refused or inconsistent generation/verification input."""


@dataclass(frozen=True)
class GeneratedArtifact:
    controller_source: str
    certificate_manifest: dict
    language: str = "python"


def _fmt(x: float) -> str:
    """Decimal literal that round-trips the float exactly (17 sig digits)."""
    return repr(float(x))


def _k_py_literal(K: np.ndarray) -> str:
    rows = ",\n        ".join(
        "[" + ", ".join(_fmt(v) for v in row) + "]" for row in K
    )
    return "[\n        " + rows + ",\n    ]"


def _k_c_literal(K: np.ndarray) -> str:
    rows = ",\n    ".join(
        "{" + ", ".join(_fmt(v) for v in row) + "}" for row in K
    )
    return "{\n    " + rows + "\n}"


def _template(name: str) -> string.Template:
    text = resources.files("s2c").joinpath(f"templates/{name}").read_text()
    return string.Template(text)


def generate(rec, p: PlantModel, language: str = "python") -> GeneratedArtifact:
    """Render the controller template for a successful design record and
    build its certificate manifest (hash covers the source text)."""
    cert = rec.certificate
    if cert.status != "success":
        raise CodegenError(f"refusing to generate from status {cert.status!r}")
    K = np.asarray(cert.K, dtype=float)
    fields = {
        "name": p.name,
        "n": p.n,
        "m": p.m,
        "gamma": _fmt(cert.gamma),
        "alpha": _fmt(cert.alpha),
        "k_literal": _k_py_literal(K),
        "k_c_literal": _k_c_literal(K),
        "guard": re.sub(r"\W", "_", p.name).upper(),
    }
    if language == "python":
        source = _template("controller_py.tmpl").substitute(fields)
    elif language == "c":
        source = _template("controller_h.tmpl").substitute(fields)
    else:
        raise CodegenError(f"unknown emission language {language!r}")

    specs = rec.specs_snapshot
    freq = rec.report.freq
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "tool_version": __version__,
        "plant": p.name,
        "language": language,
        "K": K.tolist(),
        "P": np.asarray(cert.P, dtype=float).tolist(),
        "Y": np.asarray(cert.Y, dtype=float).tolist(),
        "gamma": float(cert.gamma),
        "alpha": float(cert.alpha),
        "closed_loop_poles": [[z.real, z.imag]
                              for z in cert.closed_loop_spectrum.eigenvalues],
        "disturbance_rejection": freq.disturbance_rejection,
        "settling_median_s": rec.report.mc.settling_time_median_s,
        "overshoot_median": rec.report.mc.overshoot_median,
        "specs": {
            "h_infinity_norm": {"target": specs.hinf.target,
                                "slack": specs.hinf.slack,
                                "priority": specs.hinf.priority.value},
            "h_infinity_min": specs.hinf_min,
            "settling_time": {"target": specs.settling_time.target,
                              "slack": specs.settling_time.slack,
                              "priority": specs.settling_time.priority.value},
            "overshoot": {"target": specs.overshoot.target,
                          "slack": specs.overshoot.slack,
                          "priority": specs.overshoot.priority.value},
            "decay_rate": specs.decay_rate,
        },
        "source_sha256": hashlib.sha256(source.encode()).hexdigest(),
    }
    return GeneratedArtifact(controller_source=source,
                             certificate_manifest=manifest, language=language)


_K_SOURCE_RE = {
    "python": re.compile(r"K = (\[.*?\n    \])", re.DOTALL),
    "c": re.compile(r"S2C_GAIN\[S2C_N_INPUTS\]\[S2C_N_STATES\] = (\{.*?\n\});",
                    re.DOTALL),
}


def _k_from_source(source: str, language: str) -> np.ndarray:
    m = _K_SOURCE_RE[language].search(source)
    if m is None:
        raise CodegenError("gain matrix not found in controller source")
    literal = m.group(1)
    if language == "c":
        literal = literal.replace("{", "[").replace("}", "]")
    return np.array(json.loads(re.sub(r",\s*\]", "]", literal)), dtype=float)


def reverify(artifact: GeneratedArtifact, p: PlantModel) -> bool:
    """Re-run every certificate check from the manifest against the plant.

    Verifies the source hash, the bit-exact match between the embedded gain
    and the manifest, K = Y P^-1 consistency, the Psi and decay LMI blocks,
    the P conditioning floor, closed-loop stability, and the independent
    H-infinity norm bound. Returns True only if everything passes.
    """
    man = artifact.certificate_manifest
    try:
        K = np.array(man["K"], dtype=float)
        P = np.array(man["P"], dtype=float)
        Y = np.array(man["Y"], dtype=float)
        gamma = float(man["gamma"])
        alpha = float(man["alpha"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CodegenError(f"manifest malformed: {exc}") from None
    if K.shape != (p.m, p.n) or P.shape != (p.n, p.n) or Y.shape != (p.m, p.n):
        raise CodegenError(
            f"manifest dimensions {K.shape}/{P.shape} do not match plant"
        )
    digest = hashlib.sha256(artifact.controller_source.encode()).hexdigest()
    if digest != man.get("source_sha256"):
        return False
    try:
        K_src = _k_from_source(artifact.controller_source, artifact.language)
    except (CodegenError, json.JSONDecodeError):
        return False
    if K_src.shape != K.shape or not np.array_equal(K_src, K):
        return False
    K_check = Y @ np.linalg.inv(P)
    denom = max(np.linalg.norm(K_check), 1e-12)
    if np.linalg.norm(K - K_check) > K_CONSISTENCY_TOL * denom:
        return False
    psi_max = float(np.linalg.eigvalsh(assemble_psi(p, P, Y, gamma))[-1])
    decay_max = float(np.linalg.eigvalsh(assemble_decay(p, P, Y, alpha))[-1])
    pmin = float(np.linalg.eigvalsh(0.5 * (P + P.T))[0])
    if psi_max >= 0 or decay_max >= 0 or pmin < sdp.P_FLOOR - 1e-6:
        return False
    if eigvals(p.A + p.B @ K).max_real_part >= 0:
        return False
    hn = hinf_norm(p.A + p.B @ K, p.E, p.Cz + p.Dz @ K, np.zeros((p.z, p.w)))
    return bool(hn <= gamma * (1.0 + 1e-3))


def write_artifact(artifact: GeneratedArtifact, out_dir, name: str) -> tuple:
    """Write <name>_controller.<ext> and <name>_certificate.json atomically."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = {"python": "py", "c": "h"}[artifact.language]
    src_path = out_dir / f"{name}_controller.{ext}"
    man_path = out_dir / f"{name}_certificate.json"
    for path, text in (
        (src_path, artifact.controller_source),
        (man_path, json.dumps(artifact.certificate_manifest, indent=2) + "\n"),
    ):
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text)
        tmp.replace(path)
    return src_path, man_path
