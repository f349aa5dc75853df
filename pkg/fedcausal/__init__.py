# Federated causal inference for a target population.
# Site-specific AIPW estimates are transported with density ratio weights,
# made multiply robust by model mixing, and combined with adaptive weights.

import os

# Configuration variables

# Set to either 'debug' or 'info', controls console logging
log = None

# numkit
ols_rank_tol = 1e-10
logistic_max_iter = 100
logistic_grad_tol = 1e-8
max_step_halvings = 30
newton_max_iter = 200
nnls_tol = 1e-10
nnls_max_sweeps = 10000

# density ratio
tilt_tol = 1e-10
ratio_cap_quantile = 0.999
ratio_cap_multiplier = 10.0
extreme_ratio_threshold = 100.0

# nuisance models
propensity_clip = (0.01, 0.99)
train_fraction = 0.5
mixing_splits = 1

# ensemble and inference
lambda_grid = (0.0, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
cv_splits = 5
# 'contrast' shares one set of weights between arms, 'arm' solves each
weight_by = 'contrast'
alpha = 0.05

threads = int(os.environ.get('FEDCAUSAL_THREADS') or 1)

# Wire objects
from fedcausal.resource import (  # noqa
    BasisSpec,
    CandidateSpec,
    FedObject,
    FedObjectEncoder,
    GlobalReport,
    MessageRecord,
    MomentSummary,
    ProtocolConfig,
    SiteEstimate,
    convert_to_fed_object)

from fedcausal.error import (  # noqa
    DataError,
    DimensionMismatch,
    EmptySample,
    FedCausalError,
    MissingClass,
    MissingTarget,
    NoConvergence,
    PrivacyViolation,
    ProtocolError,
    RankDeficient,
    ReplicationFailure,
    SchemaError,
    Separated,
    SingularJacobian,
    TooFewUnits,
    ZeroVariance)

from fedcausal.version import VERSION  # noqa
from fedcausal.util import json, logger  # noqa
