"""Wire helpers for the federation runtime."""

from twisted.internet import defer

from fedcausal.util import *  # noqa

from txfedcausal import error


@defer.inlineCallbacks
def handle_wire_error(resp):
    """Raise the exception matching a rejected delivery."""
    try:
        content = yield resp.json()
    except ValueError:
        content = None

    try:
        err = content['error']
    except (KeyError, TypeError):
        raise error.ProtocolError(
            "Invalid response from hub: %r (HTTP response code was %d)" % (
                content, resp.code))

    details = {'status': resp.code}
    details.update(err.get('details') or {})
    if resp.code == 400:
        raise error.SchemaError(err.get('message'), err.get('site_id'),
                                details)
    elif resp.code == 403:
        raise error.PrivacyViolation(err.get('message'), err.get('fields'),
                                     err.get('site_id'), details)
    elif resp.code in [404, 409]:
        raise error.ProtocolError(err.get('message'), err.get('site_id'),
                                  details)
    else:
        raise error.FedCausalError(err.get('message'), err.get('site_id'),
                                   details)
