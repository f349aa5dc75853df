import numpy as np

import fedcausal
from fedcausal import error, util


def convert_to_fed_object(resp):
    types = {
        'basis_spec': BasisSpec,
        'candidate_spec': CandidateSpec,
        'global_report': GlobalReport,
        'message_record': MessageRecord,
        'moment_summary': MomentSummary,
        'protocol_config': ProtocolConfig,
        'site_estimate': SiteEstimate,
    }

    if isinstance(resp, list):
        return [convert_to_fed_object(i) for i in resp]
    elif isinstance(resp, dict) and not isinstance(resp, FedObject):
        resp = resp.copy()
        klass_name = resp.get('object')
        if isinstance(klass_name, str):
            klass = types.get(klass_name, FedObject)
        else:
            klass = FedObject
        return klass.construct_from(resp)
    else:
        return resp


class FedObject(dict):
    OBJECT_NAME = None
    REQUIRED_FIELDS = ()

    def __init__(self, **params):
        super(FedObject, self).__init__()
        if self.OBJECT_NAME is not None:
            self['object'] = self.OBJECT_NAME
        for k, v in params.items():
            self[k] = v

    def __setattr__(self, k, v):
        if k[0] == '_' or k in self.__dict__:
            return super(FedObject, self).__setattr__(k, v)

        self[k] = v
        return None

    def __getattr__(self, k):
        if k[0] == '_':
            raise AttributeError(k)

        try:
            return self[k]
        except KeyError as err:
            raise AttributeError(*err.args)

    def __delattr__(self, k):
        if k[0] == '_' or k in self.__dict__:
            return super(FedObject, self).__delattr__(k)
        else:
            del self[k]

    @classmethod
    def construct_from(cls, values):
        instance = cls()
        instance.refresh_from(values)
        instance.validate()
        return instance

    def refresh_from(self, values):
        for k, v in values.items():
            super(FedObject, self).__setitem__(k, convert_to_fed_object(v))

    def validate(self):
        missing = [k for k in self.REQUIRED_FIELDS if k not in self]
        if missing:
            raise error.SchemaError(
                "%s payload is missing fields: %s" % (
                    self.OBJECT_NAME or 'object', ', '.join(missing)),
                details={'missing': missing})
        return self

    def __repr__(self):
        ident_parts = [type(self).__name__]

        if isinstance(self.get('object'), str):
            ident_parts.append(self.get('object'))

        if isinstance(self.get('site_id'), str):
            ident_parts.append('site_id=%s' % (self.get('site_id'),))

        unicode_repr = '<%s at %s> JSON: %s' % (
            ' '.join(ident_parts), hex(id(self)), str(self))

        return unicode_repr

    def __str__(self):
        return util.json.dumps(self, sort_keys=True, indent=2,
                               cls=FedObjectEncoder)

    def serialize(self):
        """Encode as compact JSON bytes, the form that crosses the wire."""
        return util.json.dumps(
            self, sort_keys=True, separators=(',', ':'),
            cls=FedObjectEncoder).encode('utf-8')

    @classmethod
    def deserialize(cls, content):
        if isinstance(content, bytes):
            content = content.decode('utf-8')
        try:
            values = util.json.loads(content)
        except ValueError as err:
            raise error.SchemaError('Payload is not valid JSON: %s' % err)
        if not isinstance(values, dict):
            raise error.SchemaError('Payload must be a JSON object')
        obj = convert_to_fed_object(values)
        if cls.OBJECT_NAME is not None and not isinstance(obj, cls):
            raise error.SchemaError(
                'Expected a %s payload, got %r' % (
                    cls.OBJECT_NAME, values.get('object')))
        return obj


class FedObjectEncoder(util.json.JSONEncoder):

    def default(self, obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, tuple):
            return list(obj)
        return super(FedObjectEncoder, self).default(obj)


class BasisSpec(FedObject):
    OBJECT_NAME = 'basis_spec'
    REQUIRED_FIELDS = ('kind', 'd')

    KINDS = ('linear', 'linear_plus_squares')

    @classmethod
    def build(cls, kind, q):
        """Basis over ``q`` shared covariates, constant term first."""
        if kind not in cls.KINDS:
            raise error.SchemaError('Unknown basis kind %r' % (kind,))
        if kind == 'linear':
            d = 1 + q
        else:
            d = 1 + 2 * q
        return cls(kind=kind, d=d)

    @property
    def q(self):
        if self['kind'] == 'linear':
            return self['d'] - 1
        return (self['d'] - 1) // 2

    def validate(self):
        super(BasisSpec, self).validate()
        if self['kind'] not in self.KINDS:
            raise error.SchemaError('Unknown basis kind %r' % (self['kind'],))
        if int(self['d']) < 1:
            raise error.SchemaError('Basis dimension must be positive')
        return self

    def same_as(self, other):
        return (self['kind'] == other['kind'] and
                int(self['d']) == int(other['d']))


class MomentSummary(FedObject):
    OBJECT_NAME = 'moment_summary'
    REQUIRED_FIELDS = ('site_id', 'n', 'basis', 'mean_basis')

    @property
    def means(self):
        return np.asarray(self['mean_basis'], dtype=float)


class CandidateSpec(FedObject):
    OBJECT_NAME = 'candidate_spec'
    REQUIRED_FIELDS = ('id', 'target', 'feature_map')

    TARGETS = ('treatment', 'outcome')
    FEATURE_MAPS = ('raw', 'kangschafer', 'subset')

    @classmethod
    def build(cls, id, target, kind='raw', columns=None):
        spec = cls(id=id, target=target,
                   feature_map={'kind': kind, 'columns': columns})
        return spec.validate()

    def validate(self):
        super(CandidateSpec, self).validate()
        if self['target'] not in self.TARGETS:
            raise error.SchemaError(
                'Candidate %s has unknown target %r' % (
                    self['id'], self['target']))
        kind = self['feature_map'].get('kind')
        if kind not in self.FEATURE_MAPS:
            raise error.SchemaError(
                'Candidate %s has unknown feature map %r' % (
                    self['id'], kind))
        if kind == 'subset' and not self['feature_map'].get('columns'):
            raise error.SchemaError(
                'Candidate %s selects no columns' % (self['id'],))
        return self


class SiteEstimate(FedObject):
    OBJECT_NAME = 'site_estimate'
    REQUIRED_FIELDS = ('site_id', 'role', 'mu0', 'mu1', 'n_k', 'n_T',
                       'xi_own')

    def mu(self, arm):
        return float(self['mu%d' % arm])

    @property
    def delta(self):
        return self.mu(1) - self.mu(0)

    @property
    def is_target(self):
        return self['role'] == 'target'

    def own(self, arm):
        return np.asarray(self['xi_own'][arm], dtype=float)

    def on_target(self, arm):
        parts = self.get('xi_on_target')
        if not parts:
            return np.zeros(0)
        return np.asarray(parts[arm], dtype=float)

    def tau(self, arm):
        return np.asarray(self['tau'][arm], dtype=float)

    def summary(self):
        return {
            'site_id': self['site_id'],
            'role': self['role'],
            'mu0': self.mu(0),
            'mu1': self.mu(1),
            'delta': self.delta,
            'n_k': int(self['n_k']),
            'diagnostics': dict(self.get('diagnostics') or {}),
        }


class ProtocolConfig(FedObject):
    OBJECT_NAME = 'protocol_config'
    REQUIRED_FIELDS = ('basis', 'candidates', 'method', 'alpha',
                       'lambda_grid', 'seed')

    METHODS = ('target_only', 'ss', 'ivw', 'aipw_l1', 'mr_l1')

    @classmethod
    def build(cls, candidates, method='mr_l1', basis='linear', q=1,
              alpha=None, lambda_grid=None, seed=0, cv_splits=None,
              train_fraction=None, mixing_splits=None, weight_by=None):
        if not isinstance(basis, BasisSpec):
            basis = BasisSpec.build(basis, q)
        config = cls(
            basis=basis,
            candidates=candidates,
            method=method,
            alpha=fedcausal.alpha if alpha is None else alpha,
            lambda_grid=list(fedcausal.lambda_grid
                             if lambda_grid is None else lambda_grid),
            seed=int(seed),
            cv_splits=(fedcausal.cv_splits
                       if cv_splits is None else cv_splits),
            weight_by=(fedcausal.weight_by
                       if weight_by is None else weight_by),
            train_fraction=(fedcausal.train_fraction
                            if train_fraction is None else train_fraction),
            mixing_splits=(fedcausal.mixing_splits
                           if mixing_splits is None else mixing_splits))
        return convert_to_fed_object(util.json.loads(config.serialize()))

    def validate(self):
        super(ProtocolConfig, self).validate()
        if self['method'] not in self.METHODS:
            raise error.SchemaError('Unknown method %r' % (self['method'],))
        if not 0 < float(self['alpha']) < 1:
            raise error.SchemaError('alpha must lie in (0, 1)')
        if not self['lambda_grid']:
            raise error.SchemaError('lambda grid is empty')
        if any(float(lam) < 0 for lam in self['lambda_grid']):
            raise error.SchemaError('lambda grid must be nonnegative')
        if self.get('weight_by') not in (None, 'contrast', 'arm'):
            raise error.SchemaError(
                'Unknown weighting %r' % (self['weight_by'],))
        return self

    def candidates_for(self, site_id, role):
        candidates = self['candidates']
        specs = candidates.get(site_id)
        if specs is None:
            specs = candidates.get(role)
        if not specs:
            raise error.SchemaError(
                'No candidate models configured', site_id=site_id)
        return [convert_to_fed_object(dict(spec)) for spec in specs]

    def get_option(self, name):
        value = self.get(name)
        if value is None:
            return getattr(fedcausal, name)
        return value


class MessageRecord(FedObject):
    OBJECT_NAME = 'message_record'
    REQUIRED_FIELDS = ('from_site', 'to_site', 'kind', 'payload_bytes',
                       'payload_digest', 'round')

    def sort_key(self):
        return (int(self['round']), self['from_site'], self['to_site'])


class GlobalReport(FedObject):
    OBJECT_NAME = 'global_report'
    REQUIRED_FIELDS = ('method', 'delta_hat', 'variance', 'ci', 'alpha')
