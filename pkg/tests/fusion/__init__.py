# Fusion tests package
