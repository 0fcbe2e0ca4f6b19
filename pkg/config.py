# config.py

import os
from dotenv import load_dotenv

# Load environment variables from a .env file if present
load_dotenv()


def _env_flag(name, default):
    return os.getenv(name, default).lower() in ['true', '1', 'yes']


class Config:
    """
    Configuration class that holds all the numerical and run settings for the toolkit.
    It fetches values from environment variables with default fallbacks.
    """
    VERSION = "0.3.0"

    # Grid pair scans: exact over all O(N^2) pairs up to this size, dyadic subsample beyond
    EXACT_SCAN_LIMIT = int(os.getenv('ROUGH_EXACT_SCAN_LIMIT', 4096))
    # Picard residuals are measured with a cheaper scan inside the solvers
    RESIDUAL_SCAN_LIMIT = int(os.getenv('ROUGH_RESIDUAL_SCAN_LIMIT', 256))

    # CLI defaults
    DEFAULT_N = int(os.getenv('ROUGH_DEFAULT_N', 1024))
    DEFAULT_P = float(os.getenv('ROUGH_DEFAULT_P', 2.5))
    SEED = int(os.getenv('ROUGH_SEED', 7))
    JOBS = int(os.getenv('ROUGH_JOBS', 1))
    OUTPUT_DIR = os.getenv('ROUGH_OUTPUT_DIR', "artifacts")
    LOG_LEVEL = os.getenv('ROUGH_LOG_LEVEL', "INFO").upper()

    # Solver defaults
    TOL = float(os.getenv('ROUGH_TOL', 1e-10))
    MAX_ITER = int(os.getenv('ROUGH_MAX_ITER', 60))
    SAFETY = float(os.getenv('ROUGH_SAFETY', 0.5))
    SEWING_CONSTANT = float(os.getenv('ROUGH_SEWING_CONSTANT', 1.0))
    KAPPA = float(os.getenv('ROUGH_KAPPA', 0.9))

    # Exponent fits below this r^2 are flagged as unreliable
    FIT_R2_MIN = float(os.getenv('ROUGH_FIT_R2_MIN', 0.98))

    # Write the resolved configuration next to every artifact set
    WRITE_MANIFEST = _env_flag('ROUGH_WRITE_MANIFEST', 'True')


def _convert(text):
    if ';' in text:
        return [_convert(part) for part in text.split(';') if part]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_kv_spec(text):
    """
    Parses a spec string such as "fbm:H=0.4,d=2,N=4096,seed=7".

    Parameters:
    - text (str): The spec string. The part before ':' is the kind, the rest are key=value pairs.

    Returns:
    - tuple: (kind, dict of converted values). Lists are written with ';' separators.
    """
    from errors import ConfigError

    if not text:
        raise ConfigError("Empty spec string.")
    kind, _, rest = text.partition(':')
    params = {}
    for item in rest.split(','):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition('=')
        if not sep:
            raise ConfigError(f"Malformed entry '{item}' in spec string '{text}'.")
        params[key.strip()] = _convert(value.strip())
    return kind.strip(), params
