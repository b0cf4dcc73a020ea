"""Data containers, standardization, and reproducible random streams.

All model fitting in this package happens on standardized data: predictor
columns are centered and scaled to unit Euclidean norm, the response is
centered.  Unit-norm columns make "correlation with the residual" and plain
inner products interchangeable, which is what the path solver assumes.
Coefficients can be mapped back to the original scale afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError


@dataclass(frozen=True)
class Dataset:
    """A fixed design matrix with response, prior to standardization.

    Parameters
    ----------
    X : ndarray of shape (n, p)
        Predictor matrix.
    y : ndarray of shape (n,)
        Response vector.
    names : tuple of str, optional
        Column names; defaults to x0..x{p-1}.
    """

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2:
            raise InputError(f"X must be 2-dimensional, got shape {X.shape}")
        if y.ndim != 1:
            raise InputError(f"y must be 1-dimensional, got shape {y.shape}")
        if X.shape[0] != y.shape[0]:
            raise InputError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if X.shape[0] < 2:
            raise InputError("need at least 2 observations")
        if X.shape[1] < 1:
            raise InputError("need at least 1 predictor column")
        if not np.all(np.isfinite(X)):
            raise InputError("X contains non-finite values")
        if not np.all(np.isfinite(y)):
            raise InputError("y contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.names:
            if len(self.names) != X.shape[1]:
                raise InputError(
                    f"{len(self.names)} names for {X.shape[1]} columns"
                )
            object.__setattr__(self, "names", tuple(self.names))
        else:
            object.__setattr__(
                self, "names", tuple(f"x{j}" for j in range(X.shape[1]))
            )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class StandardizedDataset:
    """Centered, unit-norm predictors with a centered response.

    ``x_scale`` holds the Euclidean norm of each centered column; columns
    that were constant get scale 0, are stored as all-zero columns, and are
    flagged in ``zero_scale``.  Such columns can never enter a selection
    path (their correlation with anything is zero) but keep their index so
    that reported variable indices always refer to the original matrix.
    """

    X: np.ndarray
    y: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    zero_scale: np.ndarray
    names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def original_coefficients(self, beta: np.ndarray) -> tuple[float, np.ndarray]:
        """Map standardized-scale coefficients back to the original scale.

        Returns ``(intercept, coefficients)`` such that
        ``X_original @ coefficients + intercept`` equals
        ``X_standardized @ beta + y_mean`` exactly.
        """
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape != (self.p,):
            raise InputError(f"beta must have shape ({self.p},), got {beta.shape}")
        coef = np.zeros(self.p)
        nz = ~self.zero_scale
        coef[nz] = beta[nz] / self.x_scale[nz]
        intercept = self.y_mean - float(self.x_mean @ coef)
        return intercept, coef


def standardize(data: Dataset) -> StandardizedDataset:
    """Center columns and y, scale each column to unit Euclidean norm.

    Constant columns cannot be scaled; they come back as zero columns with
    ``x_scale`` 0 and the ``zero_scale`` flag set, rather than raising.
    """
    X = data.X
    mean = X.mean(axis=0)
    Xc = X - mean
    scale = np.linalg.norm(Xc, axis=0)
    zero = scale <= X.shape[0] * np.finfo(np.float64).eps * (
        1.0 + np.abs(mean)
    )
    safe = np.where(zero, 1.0, scale)
    Xs = Xc / safe
    Xs[:, zero] = 0.0
    y_mean = float(data.y.mean())
    return StandardizedDataset(
        X=Xs,
        y=data.y - y_mean,
        x_mean=mean,
        x_scale=np.where(zero, 0.0, scale),
        y_mean=y_mean,
        zero_scale=zero,
        names=data.names,
    )


def snr_noise_variance(X: np.ndarray, beta: np.ndarray, snr: float) -> float:
    """Noise variance that realizes a target signal-to-noise ratio.

    The ratio is defined as Var(X beta) / Var(noise), with Var taken as the
    sample variance (ddof=1) of the signal vector.  Returns the noise
    variance to draw iid Gaussian errors with.
    """
    if snr <= 0:
        raise ConfigError(f"snr must be positive, got {snr}")
    X = np.asarray(X, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    signal = X @ beta
    var = float(np.var(signal, ddof=1))
    if var <= np.finfo(np.float64).tiny:
        raise InputError("X @ beta is constant; snr is undefined")
    return var / snr


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    Streams are keyed by a master seed plus a path of child indices and are
    backed by a counter-based generator, so any stream can be reconstructed
    independently of the order in which streams are consumed.  Two streams
    with the same (seed, path) yield identical draws; distinct paths give
    statistically independent draws.
    """

    seed: int
    path: tuple[int, ...] = field(default=())

    def child(self, index: int) -> "RngStream":
        """The index-th sub-stream of this stream."""
        if index < 0:
            raise ConfigError(f"stream index must be non-negative, got {index}")
        return RngStream(self.seed, self.path + (index,))

    def generator(self) -> np.random.Generator:
        """A fresh numpy Generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))
