#!/usr/bin/env python3
"""
Many-worlds inverse renderer.

Run modes:
  python run_manyworlds.py refs scene.json --out refs
  python run_manyworlds.py render scene.json --camera 0
  python run_manyworlds.py gradcheck scene.json gradcheck.json
  python run_manyworlds.py optimize scene.json refs opt.json runs/out
  python run_manyworlds.py extract final.mwgrid --out final.obj
  python run_manyworlds.py metrics a.obj b.obj
"""
from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from manyworlds.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
