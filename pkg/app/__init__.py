# CoastPCA
