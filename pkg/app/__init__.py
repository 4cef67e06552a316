"""
贝叶斯曲线配准与双因子模型

同时估计每条曲线的扭曲函数和配准后样本的两个主要函数因子：
- 改进变分贝叶斯（AVB）：快速点估计与近似后验
- Metropolis-within-Gibbs：完整后验抽样，可由AVB结果初始化
"""

__version__ = "1.0.0"
__author__ = "FA Registration Team"
