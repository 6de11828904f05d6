"""Tabulate the degrees-of-freedom grid under every KLD convention and write a markdown report."""
import argparse
from dataclasses import dataclass
from pathlib import Path

from flexreg.nuplan import REFERENCE_GRIDS, compare_conventions


@dataclass
class Config:
    nu_min: float = 2.8
    nu_max: float = 14.4
    decimals: int = 1
    out: Path = Path("docs/nu_grid_conventions.md")


def render(cfg: Config) -> str:
    rows = compare_conventions(cfg.nu_min, cfg.nu_max, (3, 4), cfg.decimals)
    lines = [
        "# Degrees-of-freedom grid under each KLD convention",
        "",
        f"Grids between {cfg.nu_min} and {cfg.nu_max}, equally spaced in the chosen metric.",
        "Reference grids: " + "; ".join(f"K={k}: {list(v)}" for k, v in sorted(REFERENCE_GRIDS.items())) + ".",
        "Rows are ranked by interior points matching the reference after rounding, then by total deviation.",
        "",
        "| direction | scaling | metric | K=3 interior | K=4 interior | rounded matches | max deviation |",
        "|---|---|---|---|---|---|---|",
    ]
    for r in rows:
        g3 = ", ".join(f"{v:.3f}" for v in r["grids"][3][1:-1])
        g4 = ", ".join(f"{v:.3f}" for v in r["grids"][4][1:-1])
        lines.append(f"| {r['direction']} | {r['scaling']} | {r['metric']} | {g3} | {g4} | "
                     f"{r['rounded_matches']} | {r['max_interior_deviation']:.3f} |")
    best = rows[0]
    lines += ["", f"Adopted: {best['direction']}, {best['scaling']} scaling, equal {best['metric']} spacing.", ""]
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Config.out)
    cfg = Config(out=ap.parse_args().out)
    text = render(cfg)
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    cfg.out.write_text(text)
    print(text)


if __name__ == "__main__":
    main()
