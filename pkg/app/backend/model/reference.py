"""The fitted weekly five-market VAR(1) bundled with the package."""

from pathlib import Path

from app.backend.utils.errors import UsageError

from .var_model import VarModel, load_model

WEEKLY_MODEL_PATH = Path(__file__).resolve().parent.parent / "Data" / "weekly_markets_model.txt"
MARKET_LABELS = ["be", "de", "jp", "uk", "us"]


def weekly_markets_model(k: int = 4, p: int = 1) -> VarModel:
    """Load the bundled fit as k assets plus p predictors (k + p must be 5)."""
    if k + p != 5 or k < 1:
        raise UsageError(f"the bundled model has 5 series; got k={k}, p={p}")
    base = load_model(WEEKLY_MODEL_PATH)
    return VarModel(base.nu_tilde, base.phi_tilde, base.sigma(1), k, p, labels=MARKET_LABELS)
