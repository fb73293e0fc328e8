"""Shared test plumbing: access to the capture manager for gate reporting."""

CAPTURE = {}


def pytest_configure(config):
    CAPTURE["manager"] = config.pluginmanager.getplugin("capturemanager")
