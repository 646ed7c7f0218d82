"""
Setup script for lesionkit.

    python setup.py                   # directories, requirements, backend checks, .env
    python setup.py --skip-install    # only check what is already installed
    python setup.py --synthetic       # also write the synthetic dataset under data/synthetic
"""
import argparse
import importlib
import logging
import subprocess
import sys
from pathlib import Path
from typing import Dict, Optional

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

ROOT = Path(__file__).resolve().parent
MIN_PYTHON = (3, 8)

# import name -> requirements.txt name
BACKENDS = {
    'numpy': 'numpy',
    'scipy': 'scipy',
    'pandas': 'pandas',
    'sklearn': 'scikit-learn',
    'maxflow': 'PyMaxflow',
    'cv2': 'opencv-python-headless',
    'plotly': 'plotly',
    'matplotlib': 'matplotlib',
    'dotenv': 'python-dotenv',
    'pydantic': 'pydantic',
}


def check_python(version=sys.version_info) -> bool:
    if tuple(version[:2]) < MIN_PYTHON:
        logger.error(f"Python {MIN_PYTHON[0]}.{MIN_PYTHON[1]}+ required, found {version[0]}.{version[1]}")
        return False
    return True


def create_directories(root: Path = ROOT) -> None:
    """Create the data and output locations the CLI defaults point at."""
    for directory in ("data/Images_png", "outputs/masks", "outputs/evaluation", "outputs/tensors"):
        (root / directory).mkdir(parents=True, exist_ok=True)
        logger.info(f"Created directory: {directory}")


def install_requirements(root: Path = ROOT) -> bool:
    try:
        logger.info("Installing required packages...")
        subprocess.check_call([sys.executable, "-m", "pip", "install", "-r", str(root / "requirements.txt")])
    except subprocess.CalledProcessError as e:
        logger.error(f"Error installing requirements: {e}")
        return False
    return True


def installed_backends() -> Dict[str, Optional[str]]:
    """Version of every runtime dependency, None for those that fail to import."""
    versions = {}
    for module, package in BACKENDS.items():
        try:
            versions[package] = getattr(importlib.import_module(module), '__version__', 'unknown')
        except ImportError as e:
            logger.error(f"{package} is not importable: {e}")
            versions[package] = None
    return versions


def check_min_cut() -> bool:
    """Solve a two-node cut with PyMaxflow."""
    import maxflow

    graph = maxflow.Graph[float]()
    nodes = graph.add_nodes(2)
    graph.add_edge(nodes[0], nodes[1], 1.0, 1.0)
    graph.add_tedge(nodes[0], 5.0, 0.0)
    graph.add_tedge(nodes[1], 0.0, 5.0)
    flow = graph.maxflow()
    if abs(flow - 1.0) > 1e-9:
        logger.error(f"PyMaxflow returned flow {flow}, expected 1.0")
        return False
    return graph.get_segment(nodes[0]) == 0 and graph.get_segment(nodes[1]) == 1


def check_16bit_png() -> bool:
    """Round-trip 16-bit PNG values through OpenCV."""
    import cv2
    import numpy as np

    values = np.array([[0, 32768 - 1024, 32768 + 1050, 65535]], dtype=np.uint16)
    ok, encoded = cv2.imencode('.png', values)
    if not ok:
        logger.error("OpenCV cannot encode PNG")
        return False
    decoded = cv2.imdecode(encoded, cv2.IMREAD_UNCHANGED)
    if decoded is None or decoded.dtype != np.uint16 or not np.array_equal(decoded, values):
        logger.error("OpenCV does not round-trip 16-bit PNG")
        return False
    return True


def setup_environment(root: Path = ROOT) -> bool:
    """Create .env from env.example unless one exists."""
    env_file, env_example = root / ".env", root / "env.example"
    if env_file.exists():
        logger.info(".env file already exists.")
        return True
    if not env_example.exists():
        logger.warning("No environment template found.")
        return False
    env_file.write_text(env_example.read_text())
    logger.info("Created .env from env.example; edit it to change the output directory, seed or defaults.")
    return True


def main(argv=None) -> bool:
    parser = argparse.ArgumentParser(description="Prepare a lesionkit checkout")
    parser.add_argument('--skip-install', action='store_true', help='do not run pip')
    parser.add_argument('--synthetic', action='store_true', help='write data/synthetic for the demo')
    args = parser.parse_args(argv)

    logger.info("Setting up lesionkit...")
    if not check_python():
        return False
    create_directories()

    if not args.skip_install and not install_requirements():
        logger.error("Failed to install requirements. Please check your Python environment.")
        return False

    versions = installed_backends()
    missing = [name for name, version in versions.items() if version is None]
    if missing:
        logger.error(f"Missing packages: {', '.join(missing)}")
        return False
    if not (check_min_cut() and check_16bit_png()):
        return False
    logger.info("Backends: " + ", ".join(f"{name} {version}" for name, version in versions.items()))

    setup_environment()

    if args.synthetic:
        from scripts.make_synthetic_dataset import create_sample_data
        out = ROOT / "data" / "synthetic"
        out.mkdir(parents=True, exist_ok=True)
        create_sample_data(out)

    logger.info("Setup completed successfully!")
    logger.info("Next steps:")
    logger.info("1. Put DL_info.csv and the Images_png/ tree under data/ (or run with --synthetic)")
    logger.info("2. Run: python -m src.cli optimize-anchors data/DL_info.csv --split val")
    logger.info("3. Run: python -m src.cli generate-masks data/DL_info.csv --images data/Images_png")
    logger.info("4. Run: pytest")
    return True


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
