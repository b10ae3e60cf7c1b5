import os


def _env_flag(name: str, default: str = "") -> bool:
    return os.environ.get(name, default).strip().lower() in {"1", "true", "yes", "on"}


class Config:
    OUTPUT_DIR = os.environ.get("NIMO_OUTPUT_DIR", "results")
    WORKERS = int(os.environ.get("NIMO_WORKERS", "1"))
    SEED = int(os.environ.get("NIMO_SEED", "0"))
    LOG_LEVEL = os.environ.get("NIMO_LOG_LEVEL", "INFO").upper()
    TRACE = _env_flag("NIMO_TRACE")
