"""
One word carries the sentence
=============================

A naive Bayes classifier scores four-word restaurant snippets. For
"the food was superb" the positive probability rests almost entirely
on "superb", and the token importances say so: replacing that word is
the only substitution that costs probability mass.

Counterfactuals here are sentences. The favorable ones swap a word and
gain probability, the unfavorable ones lose it.
"""

from melime.experiments import text_checks, text_experiment

report = text_experiment(seed=0)
mel = report["melime"]

print("sentence:            the food was superb")
print("p(pos | sentence) =", round(mel["prediction"], 4))
print()

print("token importances (negative means replacing it hurts):")
for name, value in sorted(mel["importances"].items(), key=lambda kv: kv[0]):
    print("   %-10s %+0.4f" % (name, value))
print()

print("favorable rewrites:")
for cf in mel["counterfactuals"]["favorable"][:3]:
    print("   %0.4f  %s" % (cf["y"], " ".join(cf["x"])))
print("unfavorable rewrites:")
for cf in mel["counterfactuals"]["unfavorable"][:3]:
    print("   %0.4f  %s" % (cf["y"], " ".join(cf["x"])))
print()

for name, ok in text_checks(report).items():
    print(("pass " if ok else "FAIL "), name)
