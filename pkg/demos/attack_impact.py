"""How label flipping degrades the attacked class as attackers multiply.

Runs the desk-scale federated task with no defense at increasing malicious
fractions and prints the final source-class recall and overall accuracy.
The headline effect: overall accuracy barely moves while recall of the
attacked class collapses, which is what makes the attack hard to notice
from aggregate metrics alone.
"""

import fedsim

train = fedsim.synthesize(10, 200, 64, 6.0, seed=[0, 1000])
test = fedsim.synthesize(10, 50, 64, 6.0, seed=[0, 1001])

print("malicious  accuracy  source_recall")
for fraction in (0.0, 0.1, 0.2, 0.3, 0.4):
    config = fedsim.FederationConfig(malicious_fraction=fraction, repeats=3)
    report = fedsim.run_experiment(config, train, test)
    final = report.final_means
    print(f"   {fraction:.1f}      {final['accuracy']:.3f}      {final['source_recall']:.3f}")

print()
print("Class 5 is relabeled as 3 on every malicious shard; the global model")
print("ends up folding the two classes together while the other eight stay intact.")
