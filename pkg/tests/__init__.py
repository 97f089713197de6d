from importlib.metadata import version

import advsl


def test_version():
    assert isinstance(advsl.__version__, str)
    _, _, _ = advsl.__version__.split(".")
    assert advsl.__version__ == version("advsl")
