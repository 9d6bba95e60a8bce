"""Vectorized map priors: data model, attention encoder, denoising
pre-training, prior retrieval and fusion, and Chamfer-AP / IoU evaluation."""

from .vector_core import (DEFAULT_WINDOW, EVAL_CLASSES, ElementType,
                          PerceptionWindow, VectorInstance, VectorMap,
                          VectorPoint, compute_directions, make_instance)
from .encoder import (PriorFeatureBundle, TokenSequence, UveConfig,
                      build_attention_masks, decode_coordinates, encode,
                      encode_tokens, hybrid_prior_embed, init_params)
from .pretrain import (CorruptionConfig, CorruptionPlan, TrainReport, corrupt,
                       pretrain_loop, reconstruction_loss)
from .fusion import (FusionParams, MergedQueries, PriorStore, QueryGrid,
                     insert_prior, merge, merge_add, merge_concat,
                     merge_replace, retrieve_priors)
from .metrics import (IouResult, MatchResult, RasterGrid, average_precision,
                      chamfer_distance, evaluate_detection, iou,
                      match_instances, mean_point_error, rasterize)
from .corpus import synth_corpus

__version__ = "0.1.0"
