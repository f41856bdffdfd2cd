from .gmm import (
    GMMStyleSpace,
    StylePosterior,
    diagonal_gaussian_kl,
    interpolate_styles,
    interpolation_path,
)

__all__ = [
    "GMMStyleSpace",
    "StylePosterior",
    "diagonal_gaussian_kl",
    "interpolate_styles",
    "interpolation_path",
]
