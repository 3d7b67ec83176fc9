"""Porter stemmer (the classic 1980 five-step suffix-stripping algorithm).

Within each rule list only the longest matching suffix is considered; if its
condition fails, no shorter suffix is tried. Words that are not lowercase
ASCII-alphabetic pass through unchanged, as do words of one or two letters
(too short for any measure-based rule to apply meaningfully).
"""


def _is_consonant(word, i):
    ch = word[i]
    if ch in "aeiou":
        return False
    if ch == "y":
        # y is a vowel when preceded by a consonant, a consonant otherwise
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem):
    """Number of vowel-to-consonant transitions: the m of [C](VC)^m[V]."""
    m = 0
    for i in range(1, len(stem)):
        if _is_consonant(stem, i) and not _is_consonant(stem, i - 1):
            m += 1
    return m


def _contains_vowel(stem):
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word):
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(word):
    """Consonant-vowel-consonant ending where the last letter is not w, x or y."""
    if len(word) < 3:
        return False
    return (
        _is_consonant(word, len(word) - 3)
        and not _is_consonant(word, len(word) - 2)
        and _is_consonant(word, len(word) - 1)
        and word[-1] not in "wxy"
    )


def _apply_rules(word, rules):
    """Apply the longest-matching rule; a failed condition blocks shorter ones.

    ``rules`` are (suffix, replacement, condition) triples ordered longest
    suffix first; condition takes the stem left after removing the suffix.
    """
    for suffix, replacement, condition in rules:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if condition is None or condition(stem):
                return stem + replacement
            return word
    return word


def _step1a(word):
    return _apply_rules(
        word,
        [("sses", "ss", None), ("ies", "i", None), ("ss", "ss", None), ("s", "", None)],
    )


def _step1b(word):
    if word.endswith("eed"):
        stem = word[:-3]
        return stem + "ee" if _measure(stem) > 0 else word
    fired = False
    if word.endswith("ed") and _contains_vowel(word[:-2]):
        word = word[:-2]
        fired = True
    elif word.endswith("ing") and _contains_vowel(word[:-3]):
        word = word[:-3]
        fired = True
    if not fired:
        return word
    if word.endswith(("at", "bl", "iz")):
        return word + "e"
    if _ends_double_consonant(word) and word[-1] not in "lsz":
        return word[:-1]
    if _measure(word) == 1 and _ends_cvc(word):
        return word + "e"
    return word


def _step1c(word):
    if word.endswith("y") and _contains_vowel(word[:-1]):
        return word[:-1] + "i"
    return word


_M_POSITIVE = lambda stem: _measure(stem) > 0  # noqa: E731
_M_GT_ONE = lambda stem: _measure(stem) > 1  # noqa: E731

_STEP2_RULES = [
    ("ational", "ate", _M_POSITIVE),
    ("ization", "ize", _M_POSITIVE),
    ("iveness", "ive", _M_POSITIVE),
    ("fulness", "ful", _M_POSITIVE),
    ("ousness", "ous", _M_POSITIVE),
    ("tional", "tion", _M_POSITIVE),
    ("biliti", "ble", _M_POSITIVE),
    ("entli", "ent", _M_POSITIVE),
    ("ousli", "ous", _M_POSITIVE),
    ("ation", "ate", _M_POSITIVE),
    ("alism", "al", _M_POSITIVE),
    ("aliti", "al", _M_POSITIVE),
    ("iviti", "ive", _M_POSITIVE),
    ("enci", "ence", _M_POSITIVE),
    ("anci", "ance", _M_POSITIVE),
    ("izer", "ize", _M_POSITIVE),
    ("abli", "able", _M_POSITIVE),
    ("alli", "al", _M_POSITIVE),
    ("ator", "ate", _M_POSITIVE),
    ("eli", "e", _M_POSITIVE),
]

_STEP3_RULES = [
    ("icate", "ic", _M_POSITIVE),
    ("ative", "", _M_POSITIVE),
    ("alize", "al", _M_POSITIVE),
    ("iciti", "ic", _M_POSITIVE),
    ("ical", "ic", _M_POSITIVE),
    ("ful", "", _M_POSITIVE),
    ("ness", "", _M_POSITIVE),
]

_STEP4_RULES = [
    ("ement", "", _M_GT_ONE),
    ("ance", "", _M_GT_ONE),
    ("ence", "", _M_GT_ONE),
    ("able", "", _M_GT_ONE),
    ("ible", "", _M_GT_ONE),
    ("ment", "", _M_GT_ONE),
    ("ant", "", _M_GT_ONE),
    ("ent", "", _M_GT_ONE),
    ("ion", "", lambda stem: _measure(stem) > 1 and stem[-1:] in ("s", "t")),
    ("ism", "", _M_GT_ONE),
    ("ate", "", _M_GT_ONE),
    ("iti", "", _M_GT_ONE),
    ("ous", "", _M_GT_ONE),
    ("ive", "", _M_GT_ONE),
    ("ize", "", _M_GT_ONE),
    ("al", "", _M_GT_ONE),
    ("er", "", _M_GT_ONE),
    ("ic", "", _M_GT_ONE),
    ("ou", "", _M_GT_ONE),
]


def _step5a(word):
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            return stem
    return word


def _step5b(word):
    if _measure(word) > 1 and _ends_double_consonant(word) and word.endswith("l"):
        return word[:-1]
    return word


def porter_stem(word):
    """Stem one lowercase ASCII-alphabetic word; others pass through unchanged."""
    if len(word) <= 2 or not word.isascii() or not word.isalpha() or not word.islower():
        return word
    word = _step1a(word)
    word = _step1b(word)
    word = _step1c(word)
    word = _apply_rules(word, _STEP2_RULES)
    word = _apply_rules(word, _STEP3_RULES)
    word = _apply_rules(word, _STEP4_RULES)
    word = _step5a(word)
    word = _step5b(word)
    return word
