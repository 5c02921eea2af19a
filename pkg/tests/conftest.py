from hypothesis import settings

# numba compiles on first call, which would trip per-example deadlines
settings.register_profile("axbheat", deadline=None)
settings.load_profile("axbheat")

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
