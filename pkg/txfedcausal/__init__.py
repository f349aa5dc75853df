"""Twisted federation runtime for fedcausal.

Every protocol step returns a Deferred.
"""

from fedcausal import VERSION  # noqa

# Configuration variables

# Base URL the in-memory hub is addressed by
HUB_URL = 'http://federation.local'

from txfedcausal.runtime import (  # noqa
    audit_ledger,
    dump_ledger,
    expected_census,
    run_round)

from txfedcausal.simbench import (  # noqa
    MetricsTable,
    run_scenario)

from txfedcausal.error import (  # noqa
    FedCausalError,
    PrivacyViolation,
    ProtocolError,
    ReplicationFailure,
    SchemaError)
