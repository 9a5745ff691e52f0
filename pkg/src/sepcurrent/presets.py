"""The standard verification grid: kernels x initial conditions x times.

Small instances shared by the CLI verification suites and the test suite.
Windows are centered contiguous lattices split at 0, so step initial
conditions fill the left half.
"""

from __future__ import annotations

from dataclasses import dataclass

from .kernels import (
    Configuration,
    Partition,
    RateKernel,
    SiteWindow,
    make_heavy_tail,
    make_nearest_neighbor,
    make_random_environment,
    product_configuration,
    step_configuration,
)

__all__ = ["GridInstance", "centered_window", "build_kernel", "build_initial",
           "default_grid", "ENV_SEED", "PRODUCT_SEED"]

ENV_SEED = 7
PRODUCT_SEED = 11
EPSILON = 0.2
RHO = 0.5

KERNEL_NAMES = ("nearest_neighbor", "heavy_tail", "random_environment")
IC_NAMES = ("step", "product")


def centered_window(size: int) -> SiteWindow:
    """Contiguous window of the given size with the split point 0 inside."""
    if size < 2:
        raise ValueError("window size must be at least 2")
    half = size // 2
    return SiteWindow.lattice(-(half - 1) - (size % 2), half)


def build_kernel(name: str, window: SiteWindow) -> RateKernel:
    if name == "nearest_neighbor":
        return make_nearest_neighbor(window, 1.0)
    if name == "heavy_tail":
        return make_heavy_tail(window, 1.5, window.size)
    if name == "random_environment":
        return make_random_environment(window, ENV_SEED, EPSILON)
    raise ValueError(f"unknown kernel preset {name!r}")


def build_initial(name: str, window: SiteWindow, partition: Partition) -> Configuration:
    if name == "step":
        return step_configuration(window, partition)
    if name == "product":
        return product_configuration(window, RHO, PRODUCT_SEED)
    raise ValueError(f"unknown initial condition {name!r}")


@dataclass(frozen=True)
class GridInstance:
    kernel_name: str
    window_size: int
    ic_name: str

    def build(self):
        window = centered_window(self.window_size)
        partition = Partition.split(window, 0)
        kernel = build_kernel(self.kernel_name, window)
        eta = build_initial(self.ic_name, window, partition)
        return kernel, eta, partition

    @property
    def label(self) -> str:
        return f"{self.kernel_name}/n{self.window_size}/{self.ic_name}"


def default_grid(window_sizes=(6, 8)) -> list[GridInstance]:
    return [
        GridInstance(k, n, ic)
        for k in KERNEL_NAMES
        for n in window_sizes
        for ic in IC_NAMES
    ]
