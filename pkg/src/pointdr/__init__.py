"""Domain-randomized, prototype-contrastive training for LiDAR segmentation."""

from .augment import AugmentConfig, strong_view, weak_view
from .metrics import EvalReport, ReportTable, report
from .model import Model, VoxelGrid, featurize, load_checkpoint, save_checkpoint
from .pc_io import (CLASS_NAMES, IGNORED, INVALID, NUM_CLASSES, LabelMap, PointCloud,
                    read_labels, read_scan, write_labels, write_scan)
from .pointdr_core import (LossBreakdown, MemoryBank, bank_update, class_average,
                           contrastive_loss, cross_entropy, total_loss)
from .toy import ToyBenchmark, generate_toy
from .trainer import TrainConfig, ce_train_step, train, train_step
from .weather import WeatherConfig, corrupt

__version__ = "0.1.0"
