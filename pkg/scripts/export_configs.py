"""Write the built-in scenarios as editable .ini files in configs/."""

import argparse
from pathlib import Path

from activereg.config import serialize_config
from activereg.io import atomic_write_text
from activereg.scenarios import CONFIGS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).resolve().parent.parent / "configs", type=Path)
    args = ap.parse_args()
    for name, build in sorted(CONFIGS.items()):
        cfg = build()
        path = args.out / f"scenario_{name.lower()}.ini"
        atomic_write_text(path, serialize_config(cfg))
        print(f"{path}  sha256:{cfg.digest()[:12]}")


if __name__ == "__main__":
    main()
