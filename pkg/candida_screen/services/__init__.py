# Algoritmos puros do pipeline (sem IO além de imagens)
