from chainrbac.auth import sign_challenge
from chainrbac.engine import CSP


def access(engine, keypair, role, obj, op, *, signer=None):
    """Issue a challenge for ``keypair`` and answer it with ``signer``'s key."""
    ch = engine.challenges.issue_challenge(keypair.public_key)
    sig = sign_challenge((signer or keypair).private_key, ch.nonce)
    return engine.request_access_to_res(CSP, keypair.public_key, role, obj, op, (ch.challenge_id, sig))
