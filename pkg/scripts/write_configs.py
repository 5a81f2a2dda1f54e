"""Write the bundled default configurations to configs/ as full, lossless dumps."""
from pathlib import Path

from ospde.config import dumps
from ospde.suites import DEFAULT_TEXT, default_config

NOTES = {
    "benchmark": "Closed-form obstacle heat benchmark: xi = sin(pi x), S = sin(pi x)/2, no forcing.",
    "ito_benchmark": "Deterministic benchmark with a sine dominator, used for Ito refinement studies.",
    "linear_stochastic": "Additive sine forcing and noise with linear damping, static obstacle below zero.",
    "comparison": "Coefficients independent of (y, z); the second problem is shifted upward by comparison.*.",
    "comparison_nonlinear": "Lipschitz nonlinear drift (f_y, f_nl); ordered data shifted by comparison.*.",
    "max_principle": "Linear problem with an Ito boundary process; experiment.factor is the frozen calibration.",
    "max_principle_dominated": "Data dominated by the boundary process: (u - M)^+ must vanish exactly.",
}


def main(out="configs"):
    root = Path(out)
    root.mkdir(exist_ok=True)
    for name in DEFAULT_TEXT:
        text = f"# {NOTES[name]}\n# Regenerate with scripts/write_configs.py\n\n" + dumps(default_config(name))
        (root / f"{name}.cfg").write_text(text)
        print(root / f"{name}.cfg")


if __name__ == "__main__":
    main()
