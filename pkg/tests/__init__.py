# Tests automatisés du projet qrisk
