from txfedcausal.test.mocks import hub as Hub  # noqa
from txfedcausal.test.mocks import moment_summary as MomentSummary  # noqa
from txfedcausal.test.mocks import site_estimate as SiteEstimate  # noqa
