import json
import logging
import math
import os
import re
import sys
import zlib

import numpy as np

import fedcausal


FEDCAUSAL_LOG = os.environ.get('FEDCAUSAL_LOG')

logger = logging.getLogger('fedcausal')

__all__ = [
    'json',
    'log_debug',
    'log_info',
    'log_warning',
    'logfmt',
    'derive_seed',
    'fsum_mean',
]

# Console levels that echo a call at each logger level
_ECHOED_BY = {
    'debug': ('debug',),
    'info': ('debug', 'info'),
    'warning': ('debug', 'info'),
}


def _console_log_level():
    for level in (fedcausal.log, FEDCAUSAL_LOG):
        if level in ('debug', 'info'):
            return level
    return None


def _log(level, message, params):
    line = logfmt(dict(params, message=message))
    if _console_log_level() in _ECHOED_BY[level]:
        sys.stderr.write(line + '\n')
    getattr(logger, level)(line)


def log_debug(message, **params):
    _log('debug', message, params)


def log_info(message, **params):
    _log('info', message, params)


def log_warning(message, **params):
    _log('warning', message, params)


def _format_value(val):
    if isinstance(val, (list, tuple, np.ndarray)):
        return ','.join(_format_value(v) for v in val)
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    return str(val)


def _quote(text):
    return repr(text) if re.search(r'\s', text) else text


def logfmt(props):
    """``key=value`` pairs sorted by key; sequences are comma joined."""
    return ' '.join('%s=%s' % (_quote(str(key)), _quote(_format_value(val)))
                    for key, val in sorted(props.items()))


def _seed_key(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode('utf-8'))
    return int(key)


def derive_seed(seed, *keys):
    """Derive a 32-bit seed for a named substream of ``seed``."""
    entropy = [_seed_key(seed)] + [_seed_key(key) for key in keys]
    sequence = np.random.SeedSequence(entropy)
    return int(sequence.generate_state(1)[0])


def fsum_mean(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float('nan')
    return math.fsum(values) / values.size
