"""Chain files: one CSV row per stored draw plus a JSON sidecar.

Columns are ``mu_star.j``, ``sigma2.j``, ``w.j``, ``wdot.j.k``, ``beta.i``,
``nu.j`` (ordinary-t chains only) and ``loglik``, all 1-based.  Floats are
written with ``repr`` so a re-run with the same seed is byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .gibbs import Chain, SamplerConfig
from .mixmodel import ModelSpec

__all__ = ["chain_columns", "write_chain", "read_chain", "sidecar_path"]


def chain_columns(J: int, K: int, p: int, with_nu: bool) -> list:
    cols = [f"mu_star.{j}" for j in range(1, J + 1)]
    cols += [f"sigma2.{j}" for j in range(1, J + 1)]
    cols += [f"w.{j}" for j in range(1, J + 1)]
    cols += [f"wdot.{j}.{k}" for j in range(1, J + 1) for k in range(1, K + 1)]
    cols += [f"beta.{i}" for i in range(1, p + 1)]
    if with_nu:
        cols += [f"nu.{j}" for j in range(1, J + 1)]
    return cols + ["loglik"]


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_chain(chain: Chain, path, spec: ModelSpec, cfg: SamplerConfig, extra: dict | None = None) -> Path:
    path = Path(path)
    M = len(chain)
    blocks = [chain.mu_star, chain.sigma2, chain.w, chain.wdot.reshape(M, -1), chain.beta.reshape(M, -1)]
    if chain.nu is not None:
        blocks.append(chain.nu)
    blocks.append(chain.loglik.reshape(M, 1))
    table = np.concatenate(blocks, axis=1)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(chain_columns(spec.J, spec.K, spec.p, chain.nu is not None))
        for row in table:
            wr.writerow([repr(float(v)) for v in row])
    side = {
        "spec": spec.to_dict(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "draws": M,
        "wall_time": chain.wall_time,
        "nu_accept_rate": chain.nu_accept_rate,
    }
    side.update(extra or {})
    sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True))
    return path


def read_chain(path):
    """Return ``(chain, spec, config, sidecar)`` for a chain CSV and its sidecar."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"chain file not found: {path}")
    side_p = sidecar_path(path)
    if not side_p.exists():
        raise FileNotFoundError(f"chain sidecar not found: {side_p}")
    side = json.loads(side_p.read_text())
    spec = ModelSpec.from_dict(side["spec"])
    cfg = SamplerConfig(**side["config"])
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    with_nu = any(h.startswith("nu.") for h in header)
    expected = chain_columns(spec.J, spec.K, spec.p, with_nu)
    if header != expected:
        raise ValueError(f"{path}: unexpected columns {header[:6]}...")
    table = np.array(body, dtype=float).reshape(len(body), len(header))
    J, K, p, M = spec.J, spec.K, spec.p, table.shape[0]
    pos = 0

    def take(width):
        nonlocal pos
        block = table[:, pos : pos + width]
        pos += width
        return block

    mu_star, sigma2, w = take(J), take(J), take(J)
    wdot = take(J * K).reshape(M, J, K)
    beta = take(p)
    nu = take(J) if with_nu else None
    loglik = take(1)[:, 0]
    chain = Chain(
        mu_star=mu_star,
        sigma2=sigma2,
        w=w,
        wdot=wdot,
        beta=beta,
        loglik=loglik,
        n_j=np.zeros((M, J), dtype=int),
        n_jk=np.zeros((M, J, K), dtype=int),
        nu=nu,
        wall_time=side.get("wall_time", 0.0),
        nu_accept_rate=side.get("nu_accept_rate"),
    )
    return chain, spec, cfg, side
