"""Train a full two-layer spiking net, end to end, with zero float ops.

The built-in toy stream (two rate-coded classes over 20 channels) ships
with the package, so this runs anywhere.  It drives the same engine the
dataset experiments use: rate-encoded spikes in, spike counts out,
integer loss, feedback through the transposed inference weights,
eligibility-trace gradients, shifted updates, requantization.

Run:  python3 demos/03_train_toy_task.py
"""

import tempfile
from pathlib import Path

from intspike import load_config
from intspike.cli import run_experiment
from intspike.weights import load_checkpoint

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "toy.cfg"


def main():
    cfg = load_config(CONFIG, overrides=["experiment.epochs=8"])
    with tempfile.TemporaryDirectory() as out:
        manifest = run_experiment(cfg, out)
        result = manifest.results[0]

        print("epoch  train_acc  test_acc    loss")
        for rec in result.records:
            print(f"{rec.epoch:>5}  {rec.train_acc:>9.3f}  "
                  f"{rec.test_acc:>8.3f}  {rec.loss:>6}")

        ops = result.ops
        print("\noperation totals for the whole run:")
        for kind in ("add", "mul", "bmul", "shift", "exp", "float_ops"):
            print(f"  {kind:>9}: {ops[kind]:>12,}")
        assert ops["float_ops"] == 0 and ops["exp"] == 0

        layers = load_checkpoint(Path(out) / f"checkpoint_seed{result.seed}.isnw")
        shapes = [tuple(shadow.shape) for shadow, _ in layers]
        print(f"\ncheckpoint holds shadow weights of shapes {shapes};")
        print("rerunning this script reproduces it byte for byte.")


if __name__ == "__main__":
    main()
