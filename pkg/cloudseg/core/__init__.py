"""Segmentation engine: tensors and autodiff, U-Net, data, training, metrics, checkpoints."""
