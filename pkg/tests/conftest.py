import pytest

from rnnfilter import lstm


@pytest.fixture(params=lstm.available_backends())
def kernel(request):
    """Run the test once per available LSTM kernel backend."""
    previous = lstm.use_backend(request.param)
    yield request.param
    lstm.use_backend(previous)
