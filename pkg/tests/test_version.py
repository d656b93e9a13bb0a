import speechmoe


def test_speechmoe_version():
    """Test to verify speechmoe can be imported and has a version number."""
    assert hasattr(speechmoe, "__version__"), "speechmoe should have a __version__ attribute"
    print(f"\nspeechmoe version: {speechmoe.__version__}")
