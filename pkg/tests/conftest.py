import os

from hypothesis import settings

# fixed example stream by default; HYPOTHESIS_PROFILE=stress explores widely
settings.register_profile("default", derandomize=True, deadline=None)
settings.register_profile("stress", max_examples=1500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))
