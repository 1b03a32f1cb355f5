import pytest

from chainrbac.auth import (ChallengeStore, generate_keypair, public_key_of, sign_challenge, verify_signature)
from chainrbac.errors import ExpiredChallengeError, UnknownChallengeError


def test_seeded_keypair_is_stable():
    a, b = generate_keypair("fixed"), generate_keypair("fixed")
    assert a == b and len(a.public_key) == 64
    assert public_key_of(a.private_key) == a.public_key


def test_random_keypairs_differ():
    assert generate_keypair().public_key != generate_keypair().public_key


def test_sign_verify():
    k, other = generate_keypair("a"), generate_keypair("b")
    sig = sign_challenge(k.private_key, b"nonce")
    assert verify_signature(k.public_key, b"nonce", sig)
    assert not verify_signature(other.public_key, b"nonce", sig)
    assert not verify_signature(k.public_key, b"other nonce", sig)
    assert not verify_signature("zz", b"nonce", sig)
    assert not verify_signature(k.public_key, b"nonce", b"short")


def test_challenges_unique(clock):
    store = ChallengeStore(clock)
    a, b = store.issue_challenge("u"), store.issue_challenge("u")
    assert a.nonce != b.nonce and a.challenge_id != b.challenge_id and len(a.nonce) == 32


def test_consume_once(clock):
    k = generate_keypair("a")
    store = ChallengeStore(clock)
    ch = store.issue_challenge(k.public_key)
    sig = k.sign(ch.nonce)
    assert store.verify_response(ch.challenge_id, sig)
    with pytest.raises(UnknownChallengeError):
        store.verify_response(ch.challenge_id, sig)


def test_failed_attempt_also_consumes(clock):
    k = generate_keypair("a")
    store = ChallengeStore(clock)
    ch = store.issue_challenge(k.public_key)
    assert not store.verify_response(ch.challenge_id, b"\0" * 64)
    with pytest.raises(UnknownChallengeError):
        store.verify_response(ch.challenge_id, k.sign(ch.nonce))


def test_expiry(clock):
    k = generate_keypair("a")
    store = ChallengeStore(clock, ttl=60)
    ch = store.issue_challenge(k.public_key)
    clock.advance(60)
    with pytest.raises(ExpiredChallengeError):
        store.verify_response(ch.challenge_id, k.sign(ch.nonce))


def test_just_before_expiry(clock):
    k = generate_keypair("a")
    store = ChallengeStore(clock, ttl=60)
    ch = store.issue_challenge(k.public_key)
    clock.advance(59.999)
    assert store.verify_response(ch.challenge_id, k.sign(ch.nonce))


def test_purge_after_grace(clock):
    store = ChallengeStore(clock, ttl=60)
    old = store.issue_challenge("u")
    clock.advance(121)
    store.issue_challenge("u")
    assert len(store) == 1
    with pytest.raises(UnknownChallengeError):
        store.consume(old.challenge_id, b"")
