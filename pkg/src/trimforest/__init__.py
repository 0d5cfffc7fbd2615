"""Random forests with alpha-trimming: locally adaptive, CV-free pruning."""
from .dataset import (Dataset, FoldPlan, SyntheticSpec, bootstrap_sample, generate, kfold,
                      load_csv, save_csv)
from .forest import (Forest, ForestConfig, alpha_grid, alpha_trim, fit_forest, load_model,
                     oob_error, predict_forest, save_model)
from .tree import Node, NodeStats, SplitPoint, Tree, TreeConfig, best_split, fit_tree, predict_tree
from .trim import (Penalty, TrimmedTree, TrimState, VarianceFloorError, child_information_case1,
                   child_information_case2, parent_information, predict_trimmed, prune)

__version__ = "0.1.0"
