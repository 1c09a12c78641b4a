import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from field.field import FieldModulus  # noqa: E402
from mdscode.mdscode import AUTO  # noqa: E402
from protocol.protocol import ProtocolConfig  # noqa: E402
from transport.sockets import DatabaseService, SocketChannel  # noqa: E402


@pytest.fixture
def small_cfg():
    """N=2, r=2, s=4 over the default field."""
    return ProtocolConfig.build(2, 2, 4)


@pytest.fixture
def tiny_cfg():
    """Same shape over F_3, small enough to enumerate."""
    return ProtocolConfig.build(2, 2, 4, 3, mixing_kind=AUTO)


@pytest.fixture
def f7():
    return FieldModulus(7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def socket_factory():
    """Channel factory that puts every handler behind its own loopback port."""
    services = []

    def factory(handlers):
        for i, handler in enumerate(handlers, start=1):
            services.append(DatabaseService(i, handler).start())
        return SocketChannel([s.address for s in services], timeout=5.0)

    yield factory
    for service in services:
        service.stop()
