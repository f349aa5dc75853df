from txfedcausal.cli import run

run()
