#!/usr/bin/env python3
"""Regenerates the fixture corpora under fixtures/.

Deterministic: the same script always writes the same bytes.

    python3 fixtures/generate.py
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent

WEIGHTS = {
    "missing_mx": 3,
    "no_spf": 2,
    "no_dmarc": 2,
    "spf_softfail": 1,
    "freemail_domain": 1,
    "domain_mismatch": 2,
    "url_shortener": 2,
    "ip_literal_link": 2,
    "url_obfuscation": 2,
    "urgency_keywords": 1,
    "credential_request": 2,
    "generic_greeting": 1,
}

FILLER = [
    "Please find the notes from our planning meeting below.",
    "The quarterly numbers are attached for your review.",
    "Thanks again for the quick turnaround on the draft.",
    "Let me know if the schedule works for the team.",
    "The shipment left the warehouse this morning.",
]


def verdict(score):
    if score < 2:
        return "benign"
    if score < 5:
        return "needs_review"
    return "phishing"


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def rules_corpus():
    """60 emails with planted indicators and their expected scores."""
    rng = random.Random(42)
    corpus, dns, expected = [], [], []
    dns.append({"domain": "gmail.com", "has_mx": True, "spf": "pass_policy", "has_dmarc": True})

    # the naive worked example
    corpus.append({
        "id": "r000",
        "from": '"Patient Portal" <security@mypatient-portal.tk>',
        "subject": "URGENT: Verify your patient account",
        "body": "Dear patient, your portal access will be suspended. Visit http://198.45.123.67/portal-verify "
                "and log in with your password to keep access.",
        "label": "phishing",
    })
    dns.append({"domain": "mypatient-portal.tk", "has_mx": True, "spf": "softfail", "has_dmarc": False})
    expected.append({"id": "r000", "score": 8, "verdict": "phishing",
                     "fired": ["credential_request", "ip_literal_link", "no_dmarc", "spf_softfail", "urgency_keywords"]})

    for i in range(1, 60):
        fired = set()
        freemail = rng.random() < 0.15
        if freemail:
            sender = f"user{i}@gmail.com"
            domain = "gmail.com"
            fired.add("freemail_domain")
        else:
            domain = f"northwind{i}.com"
            sender = f"billing@{domain}"
            dns_mode = rng.choice(["clean", "clean", "unknown", "partial"])
            if dns_mode == "clean":
                dns.append({"domain": domain, "has_mx": True, "spf": "pass_policy", "has_dmarc": True})
            elif dns_mode == "partial":
                has_mx = rng.random() < 0.5
                spf = rng.choice(["none", "pass_policy", "softfail"])
                has_dmarc = rng.random() < 0.5
                dns.append({"domain": domain, "has_mx": has_mx, "spf": spf, "has_dmarc": has_dmarc})
                if not has_mx:
                    fired.add("missing_mx")
                if spf == "none":
                    fired.add("no_spf")
                if spf == "softfail":
                    fired.add("spf_softfail")
                if not has_dmarc:
                    fired.add("no_dmarc")
            elif rng.random() < 0.3:
                dns.append({"domain": domain, "timeout": True})

        parts = []
        if rng.random() < 0.3:
            parts.append("Dear customer,")
            fired.add("generic_greeting")
        parts.append(rng.choice(FILLER))
        subject = f"Update {i}"
        if rng.random() < 0.35:
            subject = f"Urgent update {i}"
            fired.add("urgency_keywords")
        if rng.random() < 0.35:
            parts.append("Reply with your password so we can finish the migration.")
            fired.add("credential_request")

        urls = []
        if rng.random() < 0.25:
            urls.append(f"https://bit.ly/n{i}x")
            fired.add("url_shortener")
        if rng.random() < 0.25:
            urls.append(f"http://203.0.113.{i}/account")
            fired.add("ip_literal_link")
        if rng.random() < 0.2:
            urls.append(f"https://{domain}/docs/a%2Fb%2Fc")
            fired.add("url_obfuscation")
        if rng.random() < 0.25:
            urls.append(f"https://portal{i}.net/home")
        if rng.random() < 0.3:
            urls.append(f"https://{domain}/help")
        # a non-IP link off the sender's registrable domain is a mismatch
        if any(not u.startswith("http://203.") and f"//{domain}/" not in u for u in urls):
            fired.add("domain_mismatch")
        if urls:
            parts.append("Links: " + " ".join(urls))

        score = sum(WEIGHTS[r] for r in fired)
        rid = f"r{i:03d}"
        corpus.append({"id": rid, "from": sender, "subject": subject, "body": " ".join(parts),
                       "label": "phishing" if score >= 5 else "benign"})
        expected.append({"id": rid, "score": score, "verdict": verdict(score), "fired": sorted(fired)})

    write_jsonl(ROOT / "rules" / "corpus.jsonl", corpus)
    write_jsonl(ROOT / "rules" / "dns.jsonl", dns)
    write_jsonl(ROOT / "rules" / "expected.jsonl", expected)


PHISH_TEMPLATES = [
    "Your {brand} account has been suspended. Verify your account at {url} to restore access.",
    "Unusual sign-in detected on your {brand} mailbox. Confirm your password at {url} immediately.",
    "Invoice {n} is overdue. Pay now via {url} to avoid service interruption.",
    "Your {brand} password expires today. Update your information at {url}.",
    "You have a pending refund of ${n}. Submit your credit card details at {url}.",
    "Security alert: your {brand} access will be locked. Log in at {url} to keep your account.",
    "Your mailbox storage is full. Click {url} to upgrade and keep receiving mail.",
    "Shared document waiting for you. Sign in with your credentials at {url} to view it.",
]

PHISH_QUIET = [
    "Please review the attached statement and let me know.",
    "Following up on the contract we discussed last week.",
]

BENIGN_TEMPLATES = [
    "Hi team, the sprint review moved to {day}. Agenda is in the shared folder.",
    "Reminder: the building fire drill is on {day} at 10am.",
    "Thanks for the feedback on the design doc, I updated section {n}.",
    "Lunch order for {day} is confirmed, see the menu at {url}.",
    "The newsletter for this month is out, read it at {url}.",
    "Your order {n} has shipped and should arrive by {day}.",
    "Minutes from the board meeting are attached for {day}.",
    "Can we move our one-on-one to {day} afternoon?",
]

BRANDS = ["Microsoft", "PayPal", "Apple", "Netflix", "Chase", "DocuSign"]
DAYS = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"]


def pii(rng, i):
    kind = rng.choice(["phone", "email", "ssn", "dob"])
    if kind == "phone":
        return f"Call me at (555) 201-{1000 + i:04d}."
    if kind == "email":
        return f"Contact jordan.lee{i}@example.org for details."
    if kind == "ssn":
        return f"Reference SSN 123-45-{1000 + i:04d} on file."
    return f"Patient date of birth 03/{1 + i % 28:02d}/1980."


def eval_corpus():
    """Labeled mixed corpus for end-to-end evaluation, about half with PII."""
    rng = random.Random(7)
    rows, dns = [], []
    for i in range(240):
        phishing = i % 12 < 5
        source = "synth-a" if i % 2 == 0 else "synth-b"
        if phishing:
            domain = f"secure-notice{i}.info"
            r = rng.random()
            if r < 0.4:
                dns.append({"domain": domain, "has_mx": False, "spf": "none", "has_dmarc": False})
            elif r < 0.7:
                dns.append({"domain": domain, "has_mx": True, "spf": "softfail", "has_dmarc": False})
            elif r < 0.85:
                dns.append({"domain": domain, "has_mx": True, "spf": "pass_policy", "has_dmarc": True})
            if rng.random() < 0.15:
                body = rng.choice(PHISH_QUIET)
                url_host = None
            else:
                url = rng.choice([f"http://198.51.100.{i % 250}/verify", f"https://bit.ly/q{i}",
                                  f"https://login-{i}.example-auth.net/session", f"https://{domain}/account"])
                body = rng.choice(PHISH_TEMPLATES).format(brand=rng.choice(BRANDS), url=url, n=1000 + i)
                url_host = url
            if rng.random() < 0.4:
                body = "Dear customer, " + body
            subject = rng.choice(["Action required", "Account notice", "Security alert", "Urgent: account review",
                                  "Payment reminder"])
            sender = f"support@{domain}"
        else:
            domain = f"acme{i % 20}.org"
            if i % 20 == i:
                dns.append({"domain": domain, "has_mx": True, "spf": "pass_policy", "has_dmarc": rng.random() < 0.85})
            url = f"https://{domain}/news/{i}"
            body = rng.choice(BENIGN_TEMPLATES).format(day=rng.choice(DAYS), url=url, n=i)
            subject = rng.choice(["Team update", "Schedule", "Minutes", "Order status", "Newsletter"])
            sender = f"colleague{i}@{domain}"
        if rng.random() < 0.5:
            body = body + " " + pii(rng, i)
        rows.append({"id": f"e{i:03d}", "from": sender, "subject": subject, "body": body,
                     "label": "phishing" if phishing else "benign", "source": source})
    write_jsonl(ROOT / "eval" / "corpus.jsonl", rows)
    write_jsonl(ROOT / "eval" / "dns.jsonl", dns)


def index_corpus():
    """Redacted known-phishing examples for the retrieval index."""
    rng = random.Random(11)
    rows = []
    for i in range(120):
        url = rng.choice(["http://198.51.100.7/verify", "https://bit.ly/abc", "https://auth-check.example-auth.net/s"])
        body = rng.choice(PHISH_TEMPLATES).format(brand=rng.choice(BRANDS), url=url, n=2000 + i)
        if rng.random() < 0.3:
            body = "Dear customer, " + body + " Reply to [EMAIL] with questions."
        rows.append({"id": f"k{i:03d}", "from": "unknown@redacted.invalid", "subject": "", "body": body,
                     "label": "phishing", "source": "known-phish"})
    write_jsonl(ROOT / "index" / "corpus.jsonl", rows)


def naive_eml():
    text = (
        "From: \"Patient Portal\" <security@mypatient-portal.tk>\n"
        "To: someone@example.org\n"
        "Subject: URGENT: Verify your patient account\n"
        "Message-ID: <naive-1@mypatient-portal.tk>\n"
        "Content-Type: text/plain; charset=utf-8\n"
        "\n"
        "Dear patient, your portal access will be suspended. Visit http://198.45.123.67/portal-verify\n"
        "and log in with your password to keep access.\n"
    )
    (ROOT / "naive.eml").write_text(text, encoding="utf-8", newline="\n")


if __name__ == "__main__":
    rules_corpus()
    eval_corpus()
    index_corpus()
    naive_eml()
