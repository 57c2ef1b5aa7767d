from ttfed.cli import CLI

class Main():
    def __init__(self):
        self.app = CLI()

    def run(self):
        return self.app.run()
    
if __name__ == "__main__":
    main_app = Main()
    raise SystemExit(main_app.run())
