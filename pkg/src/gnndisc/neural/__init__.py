"""Reverse-mode autodiff core and the graph attention networks built on it."""
from .kernels import BACKEND
from .model import Adam, AttentionLayer, EdgeIndex, Model, ModelConfig
from .tensor import Tensor, no_grad

__all__ = ["BACKEND", "Adam", "AttentionLayer", "EdgeIndex", "Model", "ModelConfig", "Tensor", "no_grad"]
