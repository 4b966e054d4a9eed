"""
Run configuration: defaults, JSON config files and command-line overrides.

Precedence, lowest first: `RunConfig` defaults, a JSON file passed with
`--config`, then command-line flags. Every run writes its effective
configuration so that feeding it back reproduces the run.
"""
import os
import json
import logging
from dataclasses import dataclass, field, asdict, fields
from shapeweb_solver.errors import ConfigError
from shapeweb_solver.lie_core import TAU_MULT, TAU_ZERO
from shapeweb_solver.models import TAU_BD, make_model
try:
    import numba
    _HAS_NUMBA = True
except:
    _HAS_NUMBA = False

logger = logging.getLogger(__name__)

COMMANDS = ('web', 'classify', 'stability', 'verify')
STABILITY_FAMILIES = ('euler', 'lagrange', 'planar-iii')
EFFECTIVE_CONFIG = 'effective_config.json'

@dataclass(frozen=True)
class RunConfig:
    """
    Validated settings for one run.

    Attributes:
    -----------
    command : str
        One of 'web', 'classify', 'stability', 'verify'
    model : str
        Model identifier (see shapeweb_solver.models.MODELS)
    params : dict
        Keyword arguments for the model constructor
    level : float
        Leaf level for 'web' (and leaf searches in 'classify')
    resolution : int
        Grid points per axis (at least 16)
    bounds : list of [lo, hi] pairs (optional)
        Box for leaf extraction
    family : str
        Family scanned by 'stability'
    n : int
        Number of scan points
    lsq_range : pair of float
        Squared momentum range for the 'planar-iii' scan
    tau_mult, tau_zero, tau_bd : float
        Repeated eigenvalue, zero eigenvalue and chart boundary tolerances
    output : str
        Output directory
    seed : int
        Seed for randomized checks
    threads : int (optional)
        Worker count; defaults to WEB_THREADS or the CPU count
    verbose : int
        Logging verbosity (0 warnings, 1 info, 2 debug)
    """
    command: str = 'web'
    model: str = 's3body'
    params: dict = field(default_factory=dict)
    level: float = 1.5
    resolution: int = 96
    bounds: list = None
    family: str = 'euler'
    n: int = 500
    lsq_range: tuple = (10., 80.)
    tau_mult: float = TAU_MULT
    tau_zero: float = TAU_ZERO
    tau_bd: float = TAU_BD
    output: str = '.'
    seed: int = 0
    threads: int = None
    verbose: int = 0

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError('Unknown command `{0}`'.format(self.command))
        for name in ('tau_mult', 'tau_zero', 'tau_bd'):
            if not getattr(self, name) > 0:
                raise ConfigError('Tolerance `{0}` must be positive'.format(name))
        if self.resolution < 16:
            raise ConfigError('Resolution must be at least 16')
        if self.n < 2:
            raise ConfigError('Scans need at least 2 points')
        if self.family not in STABILITY_FAMILIES:
            raise ConfigError('Unknown family `{0}`; expected one of {1}'.format(
                self.family, STABILITY_FAMILIES))
        if len(self.lsq_range) != 2 or not (0 <= self.lsq_range[0] < self.lsq_range[1]):
            raise ConfigError('lsq_range must be an increasing pair of nonnegative values')
        if self.bounds is not None and len(self.bounds) != 3:
            raise ConfigError('bounds must hold three [lo, hi] pairs')
        if (self.threads is not None) and (self.threads < 1):
            raise ConfigError('threads must be at least 1')
        # Raises ConfigError for unknown models or parameters
        make_model(self.model, **self.params)

    def build_model(self):
        model = make_model(self.model, **self.params)
        model.tau_mult = self.tau_mult
        return model

    def to_dict(self):
        d = asdict(self)
        d['lsq_range'] = list(self.lsq_range)
        if self.bounds is not None:
            d['bounds'] = [list(b) for b in self.bounds]
        return d

    def write(self, path):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError('Unknown configuration keys: {0}'.format(sorted(unknown)))
        d = dict(d)
        if 'lsq_range' in d:
            d['lsq_range'] = tuple(d['lsq_range'])
        try:
            return cls(**d)
        except TypeError as err:
            raise ConfigError(str(err))

def load_config(path):
    """
    Read a JSON configuration file into a dict.
    """
    try:
        with open(path) as f:
            d = json.load(f)
    except (OSError, ValueError) as err:
        raise ConfigError('Cannot read config `{0}`: {1}'.format(path, err))
    if not isinstance(d, dict):
        raise ConfigError('Config `{0}` must hold a JSON object'.format(path))
    return d

def merge_config(base, overrides):
    """
    Overlay non-None `overrides` on `base`; model parameters are merged key by key.
    """
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == 'params':
            params = dict(merged.get('params', {}))
            params.update(value)
            merged['params'] = params
        else:
            merged[key] = value
    return merged

def worker_count(threads=None):
    """
    Number of workers: explicit value, else WEB_THREADS, else the CPU count.
    """
    if threads is None:
        env = os.environ.get('WEB_THREADS')
        if env is None:
            return os.cpu_count() or 1
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError('WEB_THREADS must be an integer, got `{0}`'.format(env))
    if threads < 1:
        raise ConfigError('Worker count must be at least 1')
    return threads

def apply_threads(threads=None):
    """
    Cap numba's thread pool at the worker count and return the count.
    """
    n = worker_count(threads)
    if _HAS_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    logger.debug('Using %d worker threads', n)
    return n
