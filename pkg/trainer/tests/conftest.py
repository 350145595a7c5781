import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))


# The KL basis cache is shared by every solver-CLI invocation in this
# session (the 128^2 eigendecomposition takes about a minute); pointing
# it into the pytest temp tree keeps runs hermetic.
@pytest.fixture(scope="session", autouse=True)
def _kl_cache(tmp_path_factory):
    os.environ["MSG_CACHE_DIR"] = str(tmp_path_factory.mktemp("klcache"))
