"""cameranet: a two-stage learned camera ISP.

Raw mosaics are prepared by a fixed pipeline (bad pixel removal, level
normalization, vignetting compensation, initial demosaicking), restored
by a U-Net in CIE XYZ, converted to linear sRGB, and enhanced by a
second U-Net. Training, evaluation, synthetic data generation, and the
supporting autodiff engine all live here.
"""

__version__ = "0.1.0"
