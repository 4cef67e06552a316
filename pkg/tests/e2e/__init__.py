"""端到端测试模块"""
