# conftest.py
# Root marker so `config` and `src` import from the project root under pytest.
