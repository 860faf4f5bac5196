"""Semi-supervised graph segmentation with the SDIE/MBO scheme for the
fidelity-forced graph Allen-Cahn equation."""
from .engine import (LabelState, SdieParams, lyapunov_H, mbo_update,
                     run_sdie, sdie_update)
from .estimator import SDIEClassifier
from .exceptions import (DegenerateDegreeError, DegenerateGraphError,
                         IllConditionedKernelError, InputError,
                         MethodFailureError, NumericalError,
                         PreconditionError, SingularStepError)
from .expsolver import (ForcedDiffusion, PropagatorConfig,
                        StrangCoefficients, apply_S_tau, compute_b,
                        euler_step, propagate, strang_step, yoshida_step)
from .graph import (DenseWeights, FidelityData, GaussianSimilarity,
                    GaussianWeights, Graph, dense_laplacian,
                    gaussian_similarity, ginzburg_landau_fidelity,
                    inner_product_V, norm_V)
from .lowrank import (InterpolationSets, LowRankLaplacian, nystrom_classic,
                      nystrom_qr, relative_frobenius_error,
                      sample_interpolation_sets, truncated_svd_baseline)

__version__ = "0.1.0"
