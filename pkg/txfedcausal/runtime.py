"""One round of federated estimation over an in-memory HTTP hub.

Every cross-site payload is JSON encoded, POSTed to the hub through
``treq.testing.StubTreq``, checked against the protocol vocabulary and the
list of individual-level field names, recorded in the privacy ledger and
decoded again by the recipient. The target site doubles as coordinator.

Site computations may run in a thread pool; all hub traffic stays on the
reactor thread.
"""

import hashlib

from twisted.internet import defer, threads
from twisted.web import resource
from treq.testing import StubTreq

import txfedcausal
from fedcausal import pipeline
from fedcausal.resource import (FedObjectEncoder, MessageRecord,
                                convert_to_fed_object)
from txfedcausal import error, util


# kind -> round
VOCABULARY = {
    'config': 0,
    'moment_summary': 1,
    'site_estimate': 2,
}

FORBIDDEN_FIELDS = frozenset(['y', 'a', 'X', 'V', 'rows', 'covariates'])

COORDINATOR = 'coordinator'
BROADCAST = '*'


def payload_fields(payload):
    """Every mapping key that appears anywhere in a payload."""
    fields = set()
    if isinstance(payload, dict):
        for key, value in payload.items():
            fields.add(key)
            fields |= payload_fields(value)
    elif isinstance(payload, list):
        for item in payload:
            if isinstance(item, (dict, list)):
                fields |= payload_fields(item)
    return fields


def encode(obj):
    return util.json.dumps(obj, sort_keys=True, separators=(',', ':'),
                           cls=FedObjectEncoder).encode('utf-8')


def expected_census(n_sites):
    """Message count of a complete round over ``n_sites`` sites."""
    if n_sites <= 1:
        return 0
    return (n_sites - 1) + n_sites + 1


class FederationHub(resource.Resource):

    """Routes payloads between sites and keeps the ledger."""

    isLeaf = True

    def __init__(self, site_ids):
        resource.Resource.__init__(self)
        self.site_ids = frozenset(site_ids) | frozenset([COORDINATOR])
        self.ledger = []
        self.mailboxes = dict((site, []) for site in self.site_ids)

    def _reject(self, request, code, message, **extra):
        request.setResponseCode(code)
        request.setHeader(b'content-type', b'application/json')
        util.log_warning('Hub rejected message', status=code,
                         reason=message)
        body = dict(message=message, **extra)
        return encode({'error': body})

    def render_POST(self, request):
        try:
            envelope = util.json.loads(request.content.read().decode('utf-8'))
        except ValueError:
            return self._reject(request, 400, 'Body is not valid JSON')

        if not isinstance(envelope, dict) or \
                not set(['from', 'to', 'kind', 'round', 'payload']) <= \
                set(envelope):
            return self._reject(request, 400, 'Malformed envelope')

        sender, to, kind = envelope['from'], envelope['to'], envelope['kind']
        payload = envelope['payload']
        if kind not in VOCABULARY:
            return self._reject(request, 404,
                                'Unknown payload kind %r' % (kind,),
                                site_id=sender)
        if not isinstance(payload, dict):
            return self._reject(request, 400, 'Payload must be an object',
                                site_id=sender)

        leaked = sorted(FORBIDDEN_FIELDS & payload_fields(payload))
        if leaked:
            return self._reject(
                request, 403,
                'Payload carries individual-level fields: %s' % (
                    ', '.join(leaked)),
                site_id=sender, fields=leaked)
        if envelope['round'] != VOCABULARY[kind]:
            return self._reject(
                request, 409, '%s belongs to round %d, not %r' % (
                    kind, VOCABULARY[kind], envelope['round']),
                site_id=sender)
        if sender not in self.site_ids:
            return self._reject(request, 409,
                                'Unknown sender %r' % (sender,))
        if to != BROADCAST and to not in self.site_ids:
            return self._reject(request, 404,
                                'Unknown recipient %r' % (to,),
                                site_id=sender)

        content = encode(payload)
        record = MessageRecord(
            from_site=sender,
            to_site=to,
            kind=kind,
            payload_bytes=len(content),
            payload_digest=hashlib.sha256(content).hexdigest(),
            round=VOCABULARY[kind],
            fields=sorted(payload_fields(payload)))
        self.ledger.append(record)

        if to == BROADCAST:
            recipients = sorted(self.site_ids - set([COORDINATOR]))
        else:
            recipients = [to]
        for recipient in recipients:
            self.mailboxes[recipient].append((kind, content))

        util.log_debug('Delivered message', kind=kind, sender=sender,
                       to=to, payload_bytes=len(content))
        request.setResponseCode(200)
        request.setHeader(b'content-type', b'application/json')
        return encode({'delivered': recipients,
                       'digest': record['payload_digest']})


class Federation(object):

    """Sites, hub and transport for a single round."""

    def __init__(self, frames, pool=None, reactor=None):
        self.frames = list(frames)
        self.hub = FederationHub([f.site_id for f in self.frames])
        self.client = StubTreq(self.hub)
        self.pool = pool
        self.reactor = reactor

    @defer.inlineCallbacks
    def send(self, sender, to, kind, payload, round_number=None):
        envelope = {
            'from': sender,
            'to': to,
            'kind': kind,
            'round': VOCABULARY.get(kind) if round_number is None
            else round_number,
            'payload': payload,
        }
        d = self.client.post(
            '%s/deliver' % (txfedcausal.HUB_URL,),
            data=encode(envelope),
            headers={b'Content-Type': [b'application/json']})
        self.client.flush()
        resp = yield d

        if resp.code != 200:
            d = util.handle_wire_error(resp)
            self.client.flush()
            yield d

        d = resp.json()
        self.client.flush()
        content = yield d
        return content

    def receive(self, site_id, kind):
        return [convert_to_fed_object(util.json.loads(content.decode()))
                for k, content in self.hub.mailboxes[site_id] if k == kind]

    def receive_one(self, site_id, kind):
        messages = self.receive(site_id, kind)
        if len(messages) != 1:
            raise error.ProtocolError(
                'Expected one %s message, found %d' % (kind, len(messages)),
                site_id=site_id)
        return messages[0]

    def compute(self, f, *args):
        if self.pool is None:
            return defer.maybeDeferred(f, *args)
        if self.reactor is None:
            from twisted.internet import reactor
            self.reactor = reactor
        return threads.deferToThreadPool(self.reactor, self.pool, f, *args)

    @property
    def ledger(self):
        return sorted(self.hub.ledger, key=lambda r: r.sort_key())


@defer.inlineCallbacks
def run_round(frames, config, pool=None, reactor=None):
    """Run the one-round protocol and return a Deferred GlobalReport."""
    target = pipeline.find_target(frames)
    sources = [f for f in frames if f is not target]
    federation = Federation(frames, pool, reactor)

    if sources:
        yield federation.send(COORDINATOR, BROADCAST, 'config', config)
        summary = pipeline.target_summary(target, config)
        for frame in sources:
            yield federation.send(target.site_id, frame.site_id,
                                  'moment_summary', summary)

    pending = [federation.compute(pipeline.local_estimate, target, config)]
    for frame in sources:
        pending.append(federation.compute(
            pipeline.local_estimate, frame,
            federation.receive_one(frame.site_id, 'config'),
            federation.receive_one(frame.site_id, 'moment_summary')))
    results = yield defer.DeferredList(pending, consumeErrors=True)

    ok, target_estimate = results[0]
    if not ok:
        target_estimate.raiseException()

    excluded = []
    if sources:
        yield federation.send(target.site_id, COORDINATOR, 'site_estimate',
                              target_estimate)
    for frame, (ok, result) in zip(sources, results[1:]):
        if not ok:
            if result.check(error.FedCausalError):
                excluded.append(pipeline.exclusion(frame, result.value))
                continue
            result.raiseException()
        yield federation.send(frame.site_id, COORDINATOR, 'site_estimate',
                              result)

    if sources:
        estimates = federation.receive(COORDINATOR, 'site_estimate')
    else:
        estimates = [target_estimate]

    report = pipeline.finalize(estimates, target, config, excluded,
                               [f.site_id for f in frames])
    report['privacy_ledger'] = federation.ledger
    util.log_info('Federation round complete', sites=len(frames),
                  messages=len(report['privacy_ledger']),
                  excluded=len(excluded))
    return report


def audit_ledger(report):
    """Summarize the ledger per kind and raise on any privacy violation.

    Accepts a GlobalReport or a plain list of message records.
    """
    records = report.get('privacy_ledger', []) \
        if isinstance(report, dict) else report
    kinds, violations = {}, []

    for record in records:
        kind = record['kind']
        if kind not in VOCABULARY:
            violations.append({'from_site': record['from_site'],
                               'kind': kind,
                               'reason': 'kind outside protocol'})
        leaked = sorted(FORBIDDEN_FIELDS & set(record.get('fields') or []))
        if leaked:
            violations.append({'from_site': record['from_site'],
                               'kind': kind, 'fields': leaked,
                               'reason': 'individual-level fields'})
        totals = kinds.setdefault(kind, {'messages': 0, 'bytes': 0})
        totals['messages'] += 1
        totals['bytes'] += int(record['payload_bytes'])

    summary = {'messages': len(records), 'kinds': kinds,
               'violations': violations}
    if violations:
        fields = set()
        for violation in violations:
            fields.update(violation.get('fields', []))
        raise error.PrivacyViolation(
            '%d ledger entries violate the protocol' % len(violations),
            fields=fields, details=summary)
    util.log_info('Ledger audited', messages=len(records),
                  kinds=','.join(sorted(kinds)))
    return summary


def dump_ledger(records, fp, **extra):
    """Write ledger records as JSON lines."""
    for record in records:
        line = dict(record)
        line.update(extra)
        fp.write(util.json.dumps(line, sort_keys=True,
                                 cls=FedObjectEncoder))
        fp.write('\n')
