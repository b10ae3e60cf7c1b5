import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence, Tuple

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from nimo.config import Config  # noqa: E402
from nimo.data import DEFAULT_COUNTS, GeneratorSpec, Setting, generate, load_dataset, save_dataset, split  # noqa: E402
from nimo.errors import NimoError  # noqa: E402


_logger = logging.getLogger("cache_dataset")


def cache_setting(setting: Setting, directory: Path, seed: int, counts: Sequence[int] = DEFAULT_COUNTS) -> Path:
    """Generate, split and write one setting; the cache is read back as a check."""
    spec = GeneratorSpec(setting, n=sum(counts), seed=seed)
    dataset = split(generate(spec), counts, seed)
    target = Path(directory) / f"{setting.value}_seed{seed}"
    manifest = save_dataset(dataset, target)
    load_dataset(target)
    return manifest


def cache_settings(
    names: Sequence[str], directory: Path, seeds: Sequence[int], counts: Sequence[int] = DEFAULT_COUNTS
) -> Tuple[int, int]:
    """Cache every (setting, seed) pair, skipping the ones that fail."""
    written = 0
    errors = 0
    for name in names:
        try:
            setting = Setting.parse(name)
        except NimoError as exc:
            errors += 1
            _logger.error("Skipping %s: %s", name, exc)
            continue

        for seed in seeds:
            try:
                manifest = cache_setting(setting, directory, seed, counts)
            except (NimoError, OSError) as exc:
                errors += 1
                _logger.error("Skipping %s seed %d: %s", name, seed, exc)
                continue
            written += 1
            _logger.info("Wrote %s", manifest)

    return written, errors


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Write dataset caches for synthetic settings")
    parser.add_argument("settings", nargs="*", default=[s.value for s in Setting])
    parser.add_argument("--out", type=Path, default=Path(Config.OUTPUT_DIR) / "datasets")
    parser.add_argument("--seeds", type=int, nargs="+", default=[Config.SEED])
    args = parser.parse_args(argv)

    logging.basicConfig(level=Config.LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")
    written, errors = cache_settings(args.settings, args.out, args.seeds)
    print(f"Cache complete. Written: {written}, Errors: {errors}")
    return 0 if errors == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
