# Exceptions


class FedCausalError(Exception):

    def __init__(self, message=None, site_id=None, details=None):
        super(FedCausalError, self).__init__(message)

        self._message = message
        self.site_id = site_id
        self.details = details or {}

    def __str__(self):
        msg = self._message or "<empty message>"
        if self.site_id is not None:
            return u"Site {0}: {1}".format(self.site_id, msg)
        return msg


# Numerical failures

class RankDeficient(FedCausalError):
    pass


class Separated(FedCausalError):
    pass


class MissingClass(FedCausalError):
    pass


class NoConvergence(FedCausalError):

    def __init__(self, message=None, iterations=None, residual_norm=None,
                 site_id=None, details=None):
        details = dict(details or {})
        if iterations is not None:
            details['iterations'] = iterations
        if residual_norm is not None:
            details['residual_norm'] = residual_norm
        super(NoConvergence, self).__init__(message, site_id, details)
        self.iterations = iterations
        self.residual_norm = residual_norm


class SingularJacobian(FedCausalError):
    pass


# Input and data failures

class DimensionMismatch(FedCausalError):
    pass


class EmptySample(FedCausalError):
    pass


class TooFewUnits(FedCausalError):
    pass


class MissingTarget(FedCausalError):
    pass


class ZeroVariance(FedCausalError):
    pass


class DataError(FedCausalError):
    pass


class SchemaError(FedCausalError):
    pass


# Protocol failures

class PrivacyViolation(FedCausalError):

    def __init__(self, message=None, fields=None, site_id=None,
                 details=None):
        details = dict(details or {})
        if fields:
            details['fields'] = sorted(fields)
        super(PrivacyViolation, self).__init__(message, site_id, details)
        self.fields = sorted(fields or [])


class ProtocolError(FedCausalError):
    pass


class ReplicationFailure(FedCausalError):

    def __init__(self, message=None, failed=0, total=0, details=None):
        details = dict(details or {})
        details.update(failed=failed, total=total)
        super(ReplicationFailure, self).__init__(message, None, details)
        self.failed = failed
        self.total = total


# Warnings

class FedCausalWarning(UserWarning):
    pass


class PositivityWarning(FedCausalWarning):
    pass


class ExtremeWeights(FedCausalWarning):
    pass


class CandidateFailed(FedCausalWarning):
    pass


class AllSourcesFailed(FedCausalWarning):
    pass
