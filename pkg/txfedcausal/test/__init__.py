"""Test txfedcausal."""

from mock import Mock

from twisted.internet import defer
from twisted.trial.unittest import TestCase

import fedcausal
from fedcausal import error


def skip_first(run_replication):
    """Wrap run_replication so that replication 0 fails."""
    def run(spec, replication, *args):
        if replication == 0:
            return defer.fail(error.NoConvergence('Replication 0 failed'))
        return run_replication(spec, replication, *args)
    return run


class BaseTest(TestCase):

    """Default settings for all tests."""

    RESTORE_ATTRIBUTES = ('log', 'threads', 'lambda_grid', 'alpha',
                          'cv_splits', 'weight_by')

    def setUp(self):
        self._fedcausal_original_attributes = dict(
            (attr, getattr(fedcausal, attr))
            for attr in self.RESTORE_ATTRIBUTES)
        self.addCleanup(self._restore)

    def _restore(self):
        for attr, value in self._fedcausal_original_attributes.items():
            setattr(fedcausal, attr, value)

    def hub_response(self, code, body):
        """A response stub as returned by the hub client."""
        resp = Mock()
        resp.code = code
        resp.json = Mock(return_value=defer.succeed(body))
        return resp
