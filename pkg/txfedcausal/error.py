from fedcausal.error import *  # noqa
