"""Named observables on cosine coefficients.

Names are `one`, `mode_k` (c_k), `var_k` (c_k^2) and `cos_k` (cos c_k, bounded
and 1-Lipschitz). Every observable maps an array (..., K) to (...).
"""

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from repton.shared_libraries.errors import ConfigurationError


@dataclass(frozen=True)
class Observable:
    name: str
    function: Callable[[np.ndarray], np.ndarray]
    sup_norm: Optional[float] = None
    nonnegative: bool = False

    def __call__(self, coeffs: np.ndarray) -> np.ndarray:
        return self.function(np.asarray(coeffs, dtype=float))


def make_observable(name: str, n_modes: int) -> Observable:
    """Build an observable from its name.

    Raises:
        ConfigurationError: Unknown name or mode index outside 1..K-1.
    """
    if name == "one":
        return Observable(name, lambda c: np.ones(c.shape[:-1]), sup_norm=1.0, nonnegative=True)
    prefix, _, index = name.partition("_")
    if not index.isdigit():
        raise ConfigurationError(f"Unknown observable '{name}'")
    k = int(index)
    if not 1 <= k < n_modes:
        raise ConfigurationError(f"Observable '{name}' needs 1 <= k < K={n_modes}")
    match prefix:
        case "mode":
            return Observable(name, lambda c: c[..., k])
        case "var":
            return Observable(name, lambda c: c[..., k] ** 2, nonnegative=True)
        case "cos":
            return Observable(name, lambda c: np.cos(c[..., k]), sup_norm=1.0)
    raise ConfigurationError(f"Unknown observable '{name}'")


def standard_names(n_modes: int, max_modes: int = 4) -> List[str]:
    """var_k and cos_1 for the first few fluctuation modes."""
    count = min(max_modes, n_modes - 1)
    names = [f"var_{k}" for k in range(1, count + 1)]
    if count >= 1:
        names.append("cos_1")
    return names


def resolve(names: List[str], n_modes: int) -> List[Observable]:
    return [make_observable(name, n_modes) for name in (names or standard_names(n_modes))]
