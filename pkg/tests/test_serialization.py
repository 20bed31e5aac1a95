import struct
import zlib

import numpy as np
import pytest

from snnsim.errors import ChecksumError, SerializationError, TruncatedFileError, VersionMismatchError
from snnsim.network import Network
from snnsim.neurons import IzhikevichNodes, McCullochPittsNodes
from snnsim.serialization import MAGIC, load_network, network_from_bytes, network_to_bytes, read_header, save_network
from snnsim.topology import DenseConnection

from test_network import build_mixed, drive


def test_round_trip_preserves_everything():
    net = build_mixed(11)
    drive(net, 40)
    net.add_layer("I", IzhikevichNodes(3))
    net.add_layer("M", McCullochPittsNodes(2, threshold=0.5))
    net.add_connection(DenseConnection("I", "M", np.ones((3, 2)), wmin=-1.0))
    clone = network_from_bytes(network_to_bytes(net))
    assert list(clone.layers) == list(net.layers)
    for name, layer in net.layers.items():
        other = clone.layers[name]
        assert type(other) is type(layer)
        assert other.params_dict() == layer.params_dict()
        for key, value in layer.state.arrays().items():
            assert np.array_equal(other.state.arrays()[key], value), (name, key)
    assert clone.layers["E"].state.theta.any()
    for key, conn in net.connections.items():
        other = clone.connections[key]
        assert type(other) is type(conn)
        assert np.array_equal(other.w, conn.w)
        assert (other.wmin, other.wmax, other.norm) == (conn.wmin, conn.wmax, conn.norm)
        if conn.rule is not None:
            assert other.rule.config() == conn.rule.config()
            for k, v in conn.rule.state_arrays().items():
                assert np.array_equal(other.rule.state_arrays()[k], v)
    assert clone.rng.bit_generator.state == net.rng.bit_generator.state
    assert network_to_bytes(clone) == network_to_bytes(net)


def test_bytes_are_deterministic():
    assert network_to_bytes(build_mixed(2)) == network_to_bytes(build_mixed(2))
    assert network_to_bytes(build_mixed(2)) != network_to_bytes(build_mixed(3))


def test_save_and_load_file(tmp_path):
    net = build_mixed(4)
    save_network(net, tmp_path / "m.sfnet")
    assert network_to_bytes(load_network(tmp_path / "m.sfnet")) == network_to_bytes(net)
    assert [p.name for p in tmp_path.iterdir()] == ["m.sfnet"]
    assert network_to_bytes(Network.load(tmp_path / "m.sfnet")) == network_to_bytes(net)


def test_header_layout():
    data = network_to_bytes(build_mixed(1))
    assert data[:8] == MAGIC
    header, offset = read_header(data)
    (hlen,) = struct.unpack_from("<I", data, 8)
    assert offset == 12 + hlen
    assert header["format"] == "SFNET1"
    assert {a["dtype"] for a in header["arrays"]} <= {"<f8", "|u1"}
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4]) & 0xFFFFFFFF


def test_corruption_is_detected(tmp_path):
    data = network_to_bytes(build_mixed(1))
    flipped = bytearray(data)
    flipped[-10] ^= 0xFF
    with pytest.raises(ChecksumError):
        network_from_bytes(bytes(flipped))
    with pytest.raises(TruncatedFileError):
        network_from_bytes(data[:-20])
    with pytest.raises(TruncatedFileError):
        network_from_bytes(data[:10])
    with pytest.raises(VersionMismatchError):
        network_from_bytes(b"SFNET2\0\0" + data[8:])
    with pytest.raises(SerializationError):
        network_from_bytes(b"NOTSFNET" + data[8:])
    with pytest.raises(SerializationError):
        network_from_bytes(data + b"\0")
    with pytest.raises(SerializationError):
        load_network(tmp_path / "missing.sfnet")
