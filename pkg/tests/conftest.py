import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from toolgate import augmentation, index, synthetic  # noqa: E402
from toolgate.controller import SearchLevels  # noqa: E402
from toolgate.embedding import EmbedderConfig  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


class World:
    """The synthetic 50-tool fixture with its indexes, built once per session."""

    def __init__(self):
        self.tools = synthetic.build_tools()
        self.bench = synthetic.benchmark()
        self.train = synthetic.training_set()
        self.embedder_config = EmbedderConfig()
        gen = synthetic.simulated_llm(self.tools, self.bench)
        self.corpus = augmentation.augment(self.train, [t.id for t in self.tools],
                                           augmentation.AugmentationConfig(rng_seed=42), gen)
        self.l1 = index.build_level1(self.tools, self.embedder_config)
        self.l2 = index.build_level2(self.corpus, self.tools, self.embedder_config, 0.5)
        self.levels = SearchLevels(self.l1, self.l2)

    def llm(self):
        return synthetic.simulated_llm(self.tools, self.bench)


@pytest.fixture(scope="session")
def world():
    return World()


@pytest.fixture
def small_tools():
    return [
        index.ToolSpec("get_weather", "get_weather", "Get the current weather for a city",
                       {"type": "object", "properties": {"city": {"type": "string"}}, "required": ["city"]}),
        index.ToolSpec("translate", "translate", "Translate text into another language",
                       {"type": "object", "properties": {"text": {"type": "string"}, "lang": {"type": "string"}},
                        "required": ["text", "lang"]}),
        index.ToolSpec("send_email", "send_email", "Send an email message to a recipient",
                       {"type": "object", "properties": {"to": {"type": "string"}}, "required": ["to"]}),
    ]


# --- acceptance gate reporting ----------------------------------------------

_GATE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n, title = marker.kwargs["criterion"], marker.kwargs["title"]
    if rep.when == "call" or rep.failed:
        verdict = "PASS" if rep.passed else "FAIL"
        if _GATE.get(n, ("PASS",))[0] == "PASS":
            _GATE[n] = (verdict, title)


def pytest_terminal_summary(terminalreporter):
    if not _GATE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_GATE):
        verdict, title = _GATE[n]
        terminalreporter.write_line(f"CRITERION {n:>2} {verdict}: {title}")
    passed = sum(v == "PASS" for v, _ in _GATE.values())
    terminalreporter.write_line(f"{passed}/{len(_GATE)} criteria passed")
