"""Local clustered top-N recommendation over category-enriched projections."""

from .clustering import (ClusterModel, compute_density, detect_centers,
                         dnn_similarity, kmeans, spectral_cluster)
from .embedding import EmbeddingMatrix, TrainConfig, train_embeddings
from .errors import (ConfigError, DatasetEmpty, DegenerateDataset,
                     EmptyCorpus, EmptyTestSet, IngestMismatch, InvalidK,
                     LocalRecError, ParseError, StageError)
from .evaluation import FoldPlan, score_top_n, split_interactions
from .graph import (BipartiteGraph, IdMap, ProjectionGraph, build_item_category,
                    build_user_category, build_user_item, project)
from .recommend import RatingMatrix, build_rating_matrix, recommend_global, two_phase
from .walks import WalkConfig, WalkCorpus, generate_walks

__version__ = "0.1.0"
