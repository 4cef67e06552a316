"""
命令行模块

io 负责文件格式，commands 负责参数解析与三个子命令。
"""
