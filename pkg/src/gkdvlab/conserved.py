"""Mass and energy functionals, evaluated alias free on the periodic grid."""
import numpy as np

from .spectral import dealiased_product


def mass(f):
    """``int |f|^2 dx`` by Parseval."""
    return float(f.grid.L * np.sum(np.abs(f.spectral()) ** 2))


def power_integral(f, n):
    """``int f^n dx``, exact for band-limited ``f`` (zero mode of a padded product)."""
    c = f.spectral()
    return float(np.real(f.grid.L * dealiased_product([c] * n, f.grid)[0]))


def energy(f, p=4):
    """``int (1/2) f_x^2 - f^{p+1}/(p+1) dx``."""
    c = f.spectral()
    kinetic = 0.5 * f.grid.L * float(np.sum((f.grid.xi * np.abs(c)) ** 2))
    return kinetic - power_integral(f, p + 1) / (p + 1)
