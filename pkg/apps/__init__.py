# Apps package initialization
